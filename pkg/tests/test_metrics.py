import csv
import io
import math

import numpy as np
import pytest

from sivcnot.cavity import CavityParams
from sivcnot.circuit import builtin_gate_circuit
from sivcnot.metrics import (
    ANCHOR_EFFICIENCY,
    ANCHOR_FIDELITY,
    ANCHOR_R,
    DecoherenceParams,
    UndefinedFidelityError,
    calibrate,
    conversion_matrix,
    efficiency,
    evaluate,
    fidelity,
    gate_metrics,
    ideal_cnot44,
    ideal_output,
    min_conversion,
    mode_match_penalty,
    spin_decoherence_penalty,
    spin_decoherence_reduction,
    sweep,
    sweep_csv,
)
from sivcnot.optics import element_matrix
from sivcnot.protocol import gate_action, run_protocol
from sivcnot.state import config_index, prepare_initial

from conftest import random_pairs


@pytest.fixture(scope="module")
def anchor_rows():
    return {row.r: row for row in sweep(ANCHOR_R)}


@pytest.mark.parametrize("ct, out", [((0, 2), (0, 2)), ((2, 2), (2, 0)), ((3, 1), (3, 0)), ((1, 3), (1, 0))])
def test_ideal_gate_examples(ct, out):
    assert ideal_cnot44(*ct) == out


def test_ideal_gate_is_a_row_permutation():
    for c in range(4):
        assert sorted(ideal_cnot44(c, t)[1] for t in range(4)) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        ideal_cnot44(4, 0)


def test_ideal_output_matches_brute_force():
    for a, g in random_pairs(5, seed=8):
        want = np.zeros(16, dtype=complex)
        for c in range(4):
            for t in range(4):
                want[config_index(c, (c + t) % 4)] += a[3 - c] * g[3 - t]
        assert np.allclose(ideal_output(a, g), want, atol=1e-15)


def test_conversion_matrix_is_the_gate_at_ideal_reflection(gate_circuit):
    m = conversion_matrix(gate_action(gate_circuit, CavityParams.ideal()))
    perm = np.zeros((16, 16))
    for c in range(4):
        for t in range(4):
            perm[config_index(c, t), config_index(*ideal_cnot44(c, t))] = 1
    assert np.max(np.abs(m - perm)) < 1e-12
    assert min_conversion(m) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("r", [0.0, 0.5, 0.95, 0.98])
def test_rows_plus_loss_sum_to_one(gate_circuit, r):
    action = gate_action(gate_circuit, CavityParams.symmetric(r))
    m = conversion_matrix(action)
    for run in action.runs:
        i = config_index(run.control, run.target)
        assert m[i].sum() + run.result.loss == pytest.approx(1.0, abs=1e-9)
    cond = conversion_matrix(action, conditioned=True)
    assert np.allclose(cond.sum(axis=1), 1.0, atol=1e-12)


def test_zero_reflection_sanity_bound(gate_circuit):
    m = conversion_matrix(gate_action(gate_circuit, CavityParams.symmetric(0.0)))
    for i in range(16):
        j = config_index(*ideal_cnot44(*divmod(i, 4)))
        off = max(m[i, k] for k in range(16) if k != j)
        assert m[i, j] - off < 1.0


def test_efficiency_from_transfer_matrix(gate_circuit):
    # independent route: multiply dense element matrices instead of stepping the state
    r = 0.98
    bound = gate_circuit.with_reflections({s: (r, -r) for s in range(1, 5)})
    modes = gate_circuit.modes
    total = np.eye(len(modes) * 16, dtype=complex)
    for e in bound.elements:
        total = element_matrix(e, modes) @ total
    u = np.full(4, 0.5, dtype=complex)
    psi = total @ prepare_initial(u, u, gate_circuit.entry_mode, modes).amps.reshape(-1)
    psi = psi.reshape(len(modes), 16)
    detected = sum(np.sum(np.abs(psi[modes.index(m)]) ** 2) for m in gate_circuit.detectors.values())
    res = run_protocol(gate_circuit, CavityParams.symmetric(r), u, u)
    assert res.detection_probability == pytest.approx(detected, abs=1e-12)


def test_perfect_reflection_is_perfect(gate_circuit):
    ev = evaluate(gate_circuit, CavityParams.ideal())
    assert efficiency(ev) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(ev) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_undefined_without_detection():
    from sivcnot.metrics import FiducialRun

    u = np.full(4, 0.5, dtype=complex)
    from sivcnot.circuit import parse_circuit

    dark = parse_circuit("paths 3\nspins 4\nqwp 3\n")
    res = run_protocol(dark, CavityParams.ideal(), u, u)
    with pytest.raises(UndefinedFidelityError):
        FiducialRun("uniform", u, u, res).fidelity


def test_metrics_monotone_on_upper_grid():
    rows = sweep(np.linspace(0.9, 1.0, 11))
    for lo, hi in zip(rows, rows[1:]):
        assert hi.efficiency >= lo.efficiency - 1e-12
        assert hi.fidelity >= lo.fidelity - 1e-12
        assert hi.min_conversion >= lo.min_conversion - 1e-12
    assert rows[-1].efficiency == pytest.approx(1.0) and rows[-1].fidelity == pytest.approx(1.0)


@pytest.mark.parametrize("r, want", list(zip(ANCHOR_R, ANCHOR_FIDELITY)))
def test_fidelity_anchor(anchor_rows, r, want):
    assert anchor_rows[r].fidelity == pytest.approx(want, abs=0.003)


@pytest.mark.parametrize(
    "r, want",
    [
        pytest.param(r, e, marks=pytest.mark.xfail(strict=True, reason="efficiency anchor not reproduced; see ledger"))
        if r < 1
        else pytest.param(r, e)
        for r, e in zip(ANCHOR_R, ANCHOR_EFFICIENCY)
    ],
)
def test_efficiency_anchor(anchor_rows, r, want):
    assert anchor_rows[r].efficiency == pytest.approx(want, abs=0.005)


@pytest.mark.xfail(strict=True, reason="worst-case conversion at r=0.98 not reproduced; see ledger")
def test_min_conversion_anchor(anchor_rows):
    assert anchor_rows[0.98].min_conversion == pytest.approx(0.9227, abs=0.005)


def test_calibration_metadata():
    cal = calibrate()
    d = cal.to_dict()
    assert d["fidelity"]["chosen"] == "conditioned/uniform"
    assert d["fidelity"]["within_tolerance"] is True
    # nothing matches the efficiency anchors, so the documented default is kept
    assert d["efficiency"]["chosen"] == "detected/basis+uniform"
    assert d["anchors_met"] is False
    assert d["min_conversion"]["chosen"] == "loss-inclusive"
    m = gate_metrics(builtin_gate_circuit(), CavityParams.symmetric(0.98))
    assert m.definitions == {
        "fidelity": "conditioned/uniform",
        "efficiency": "detected/basis+uniform",
        "min_conversion": "loss-inclusive",
    }


def test_sweep_csv_format():
    text = sweep_csv(sweep([0.95, 1.0]))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["r", "efficiency", "fidelity", "min_conversion"]
    assert [float(x) for x in rows[2]] == [1.0, 1.0, 1.0, 1.0]
    digits = len(rows[1][1].lstrip("0.").replace(".", ""))
    assert digits >= 10
    assert sweep_csv(sweep([0.95, 1.0])) == text


def test_sweep_rejects_out_of_range():
    with pytest.raises(ValueError):
        sweep([1.2])


def test_spin_penalty_formula():
    for t, t2 in [(1e-6, 1e-2), (0.0, 1.0), (3e-3, 1e-3)]:
        p = DecoherenceParams(t, t2)
        assert spin_decoherence_penalty(p) == (math.exp(-t / t2) + 1) / 2


def test_spin_penalty_at_quoted_times():
    p = DecoherenceParams(t_total=1e-6, t2e=10e-3)
    assert spin_decoherence_penalty(p) == pytest.approx(0.99995, abs=1e-7)
    assert spin_decoherence_reduction(p) < 0.005


def test_mode_match_penalty():
    assert mode_match_penalty(DecoherenceParams(0, 1, mode_match=0.99)) == pytest.approx(1e-4, rel=1e-12)
    vals = [mode_match_penalty(DecoherenceParams(0, 1, mode_match=m)) for m in np.linspace(0.9, 1, 21)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0


def test_decoherence_params_validation():
    with pytest.raises(ValueError):
        DecoherenceParams(-1, 1)
    with pytest.raises(ValueError):
        DecoherenceParams(0, 1, mode_match=0)
