import json

import numpy as np
import pytest
from hypothesis import given, settings

from sivcnot.cavity import CavityParams
from sivcnot.optics import SpinZ
from sivcnot.protocol import (
    CHECKPOINT_TOL,
    DETECTORS,
    basis_amplitudes,
    branch_spin_state,
    checkpoint_expected,
    derive_feed_forward,
    feed_forward,
    gate_action,
    run_protocol,
)
from sivcnot.state import H, config_index, product_spin_state, state_distance

from conftest import qudits, random_pairs

UNIFORM = np.full(4, 0.5, dtype=complex)


def ideal_cnot_vector(alpha, gamma):
    """Independent construction: |c, t> -> |c, (c + t) mod 4> on printed-order inputs."""
    out = np.zeros(16, dtype=complex)
    for c in range(4):
        for t in range(4):
            out[config_index(c, (c + t) % 4)] += alpha[3 - c] * gamma[3 - t]
    return out


def test_checkpoints_on_random_inputs(gate_circuit):
    worst = {}
    for a, g in random_pairs(120, seed=11):
        res = run_protocol(gate_circuit, CavityParams.ideal(), a, g)
        assert len(res.checkpoints) == 7
        for cp in res.checkpoints:
            worst[cp.stage] = max(worst.get(cp.stage, 0.0), cp.distance)
    assert sorted(worst) == list(range(7))
    assert max(worst.values()) < CHECKPOINT_TOL


def test_stage_four_for_uniform_input(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.ideal(), UNIFORM, UNIFORM)
    (cp,) = [c for c in res.checkpoints if c.stage == 4]
    assert cp.distance < 1e-12


def test_stage_one_for_control_three(gate_circuit, rng):
    g = rng.normal(size=4) + 1j * rng.normal(size=4)
    g /= np.linalg.norm(g)
    alpha = np.array([1, 0, 0, 0], dtype=complex)
    res = run_protocol(gate_circuit, CavityParams.ideal(), alpha, g)
    observed = next(cp.observed for cp in res.checkpoints if cp.stage == 1)
    expected = observed.replace(np.zeros_like(observed.amps))
    amps = np.array(expected.amps)
    amps[observed.index((5, H))] = product_spin_state(alpha, g)
    assert state_distance(observed, observed.replace(amps)) < 1e-12


def test_final_stage_has_sixty_four_terms(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.ideal(), UNIFORM, UNIFORM)
    cp = next(c for c in res.checkpoints if c.stage == 6)
    assert len(cp.observed.nonzero_terms()) == 64
    assert np.allclose(np.abs([z for *_, z in cp.observed.nonzero_terms()]), 1 / 8)


def test_uniform_input_splits_evenly(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.ideal(), UNIFORM, UNIFORM)
    assert [b.probability for b in res.branches] == pytest.approx([0.25] * 4, abs=1e-12)


@pytest.mark.parametrize("c", range(4))
@pytest.mark.parametrize("t", range(4))
def test_truth_table_every_branch(gate_circuit, c, t):
    res = run_protocol(gate_circuit, CavityParams.ideal(), basis_amplitudes(c), basis_amplitudes(t))
    want = np.zeros(16)
    want[config_index(c, (c + t) % 4)] = 1
    for b in res.branches:
        assert b.probability == pytest.approx(0.25, abs=1e-12)
        assert np.abs(b.corrected_normalized) ** 2 == pytest.approx(want, abs=1e-10)


def test_one_three_goes_to_one_zero(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.ideal(), basis_amplitudes(1), basis_amplitudes(3))
    target = np.zeros(16)
    target[config_index(1, 0)] = 1
    for b in res.branches:
        assert state_distance(b.corrected_normalized, target) < 1e-12


def test_all_branches_agree_after_correction(gate_circuit):
    for a, g in random_pairs(30, seed=3):
        res = run_protocol(gate_circuit, CavityParams.ideal(), a, g)
        ideal = ideal_cnot_vector(a, g)
        for b in res.branches:
            assert state_distance(b.corrected_normalized, ideal) < 1e-10


def _signed(alpha, gamma, minus_controls):
    v = ideal_cnot_vector(alpha, gamma)
    for c in minus_controls:
        for t in range(4):
            v[config_index(c, t)] *= -1
    return v


@pytest.mark.parametrize(
    "detector, minus_controls, ops",
    [
        ("D_H1", (), ()),
        ("D_V1", (3, 2), (SpinZ(1),)),
        ("D_H2", (3, 1), (SpinZ(2),)),
        ("D_V2", (2, 1), (SpinZ(1), SpinZ(2))),
    ],
)
def test_feed_forward_fixture(detector, minus_controls, ops):
    assert derive_feed_forward()[detector] == ops
    for a, g in random_pairs(10, seed=17):
        raw = _signed(a, g, minus_controls)
        assert np.allclose(branch_spin_state(detector, a, g), raw, atol=1e-14)
        assert state_distance(feed_forward(detector, raw), ideal_cnot_vector(a, g)) < 1e-12


def test_unknown_detector_is_left_alone(rng):
    v = rng.normal(size=16) + 0j
    assert np.array_equal(feed_forward("elsewhere", v), v)


@pytest.mark.parametrize("r", [1.0, 0.98, 0.9, 0.5])
def test_control_is_never_altered(gate_circuit, r):
    action = gate_action(gate_circuit, CavityParams.symmetric(r))
    for run in action.runs:
        for b in run.result.branches:
            for k in np.nonzero(np.abs(b.corrected_spin) > 0)[0]:
                assert k // 4 == run.control


@settings(max_examples=40, deadline=None)
@given(qudits(), qudits())
def test_probability_bookkeeping(alpha, gamma):
    from sivcnot.circuit import builtin_gate_circuit

    c = builtin_gate_circuit()
    ideal = run_protocol(c, CavityParams.ideal(), alpha, gamma)
    assert ideal.detection_probability == pytest.approx(ideal.final_norm, abs=1e-12)
    assert ideal.final_norm == pytest.approx(1.0, abs=1e-12)
    # with lossy cavities some light also exits through undetected ports
    lossy = run_protocol(c, CavityParams.symmetric(0.93), alpha, gamma)
    assert lossy.detection_probability <= lossy.final_norm + 1e-12
    assert lossy.final_norm <= 1 + 1e-12
    assert lossy.detection_probability + lossy.loss == pytest.approx(1.0, abs=1e-12)


def test_detector_sum_equals_norm_on_detector_ports(gate_circuit):
    from sivcnot.optics import apply_elements
    from sivcnot.state import norm_sq, prepare_initial, project_detector

    bound = gate_circuit.with_reflections({s: (0.93, -0.93) for s in range(1, 5)})
    for a, g in random_pairs(5, seed=23):
        state = apply_elements(prepare_initial(a, g, gate_circuit.entry_mode, gate_circuit.modes), bound.elements)
        ports = list(gate_circuit.detectors.values())
        on_ports = sum(norm_sq(state.row(m)) for m in ports)
        assert sum(project_detector(state, m, ports)[0] for m in ports) == pytest.approx(on_ports, rel=1e-12)
        res = run_protocol(gate_circuit, CavityParams.symmetric(0.93), a, g)
        assert res.detection_probability == pytest.approx(on_ports, rel=1e-12)


def test_checkpoints_skipped_for_lossy_reflection(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.symmetric(0.98), UNIFORM, UNIFORM)
    assert res.checkpoints == ()


def test_report_schema(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.ideal(), UNIFORM, UNIFORM)
    d = json.loads(json.dumps(res.to_dict()))
    assert set(d) == {"input", "branches", "loss", "checkpoint_distances"}
    assert [b["detector"] for b in d["branches"]] == list(DETECTORS)
    assert all(len(b["corrected_spin"]) == 16 and len(b["corrected_spin"][0]) == 2 for b in d["branches"])
    assert len(d["checkpoint_distances"]) == 7


def test_checkpoint_expected_is_normalized(gate_circuit):
    for stage in range(7):
        for a, g in random_pairs(3, seed=stage):
            exp = checkpoint_expected(stage, a, g, gate_circuit)
            assert np.sum(np.abs(exp.amps) ** 2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.xfail(
    strict=True,
    reason="quoted efficiency at r=0.98 is not reproduced by the simulated circuit; see the decisions ledger",
)
def test_loss_at_098_matches_quoted_efficiency(gate_circuit):
    res = run_protocol(gate_circuit, CavityParams.symmetric(0.98), UNIFORM, UNIFORM)
    assert res.loss == pytest.approx(1 - 0.9427, abs=0.005)
