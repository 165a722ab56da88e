"""Running the gate circuit: staged evolution, detection and feed-forward."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cavity import CavityParams
from .circuit import Circuit
from .optics import CircuitValidityError, SpinZ, apply_element
from .state import (
    N_CONFIGS,
    HybridState,
    config_index,
    norm_sq,
    prepare_initial,
    project_detector,
    renormalized,
    state_distance,
)

DETECTORS = ("D_H1", "D_V1", "D_H2", "D_V2")
N_STAGES = 6
CHECKPOINT_TOL = 1e-10

IDENTITY_MAP = {1: 3, 2: 2, 3: 1, 4: 0}

# Printed intermediate states, one term per line of the derivation:
# (sign, alpha index, photon mode, {gamma index: target value}).
# alpha_1..alpha_4 multiply |3>_c..|0>_c and gamma_1..gamma_4 multiply |3>_t..|0>_t.
_STAGE_TERMS: dict[int, list[tuple[int, int, tuple[int, str], dict[int, int]]]] = {
    1: [
        (+1, 1, (5, "H"), IDENTITY_MAP),
        (+1, 2, (6, "H"), IDENTITY_MAP),
        (+1, 3, (4, "H"), IDENTITY_MAP),
        (+1, 4, (3, "H"), IDENTITY_MAP),
    ],
    2: [
        (+1, 1, (5, "H"), {1: 2, 2: 3, 3: 0, 4: 1}),
        (+1, 2, (6, "H"), IDENTITY_MAP),
        (+1, 3, (4, "H"), {1: 2, 2: 3, 3: 0, 4: 1}),
        (+1, 4, (3, "H"), IDENTITY_MAP),
    ],
    3: [
        (+1, 1, (5, "H"), {1: 2, 3: 0}),
        (-1, 1, (5, "V"), {2: 3, 4: 1}),
        (+1, 2, (6, "H"), IDENTITY_MAP),
        (+1, 3, (4, "H"), {1: 2, 3: 0}),
        (-1, 3, (4, "V"), {2: 3, 4: 1}),
        (+1, 4, (3, "H"), IDENTITY_MAP),
    ],
    4: [
        (+1, 1, (5, "H"), {1: 2, 3: 0}),
        (+1, 1, (5, "V"), {2: 1, 4: 3}),
        (+1, 2, (6, "H"), {1: 1, 2: 0, 3: 3, 4: 2}),
        (+1, 3, (4, "H"), {1: 0, 3: 2}),
        (-1, 3, (4, "V"), {2: 3, 4: 1}),
        (+1, 4, (3, "H"), IDENTITY_MAP),
    ],
    5: [
        (+1, 1, (8, "V"), {1: 2, 2: 1, 3: 0, 4: 3}),
        (+1, 2, (8, "H"), {1: 1, 2: 0, 3: 3, 4: 2}),
        (+1, 3, (7, "V"), {1: 0, 2: 3, 3: 2, 4: 1}),
        (+1, 4, (7, "H"), IDENTITY_MAP),
    ],
}

# Conditional target maps shared by the detected branches, keyed by alpha index.
_GATE_MAPS = {
    1: {1: 2, 2: 1, 3: 0, 4: 3},
    2: {1: 1, 2: 0, 3: 3, 4: 2},
    3: {1: 0, 2: 3, 3: 2, 4: 1},
    4: IDENTITY_MAP,
}

# Signs on the alpha_1..alpha_4 terms of each post-detection spin state.
BRANCH_SIGNS = {
    "D_H1": (+1, +1, +1, +1),
    "D_V1": (-1, -1, +1, +1),
    "D_H2": (-1, +1, -1, +1),
    "D_V2": (+1, -1, -1, +1),
}


def _spin_terms(sign: int, a: int, tmap: Mapping[int, int], alpha, gamma) -> np.ndarray:
    out = np.zeros(N_CONFIGS, dtype=complex)
    c = 4 - a
    for g, t in tmap.items():
        out[config_index(c, t)] += sign * alpha[a - 1] * gamma[g - 1]
    return out


def branch_spin_state(detector: str, alpha: Sequence[complex], gamma: Sequence[complex]) -> np.ndarray:
    """Normalized post-detection spin state for ``detector`` (D_H1 gives the standard gate)."""
    signs = BRANCH_SIGNS[detector]
    return sum(_spin_terms(signs[a - 1], a, _GATE_MAPS[a], alpha, gamma) for a in range(1, 5))


def checkpoint_expected(
    stage: int,
    alpha: Sequence[complex],
    gamma: Sequence[complex],
    circuit: Circuit,
) -> HybridState:
    """Analytic state at ``stage`` (0-6) over the circuit's mode basis.

    Stage 6 places each branch, with amplitude 1/2, on the port of the
    detector carrying that name in ``circuit``.
    """
    alpha = np.asarray(alpha, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    modes = circuit.modes
    if stage == 0:
        return prepare_initial(alpha, gamma, circuit.entry_mode, modes)
    amps = np.zeros((len(modes), N_CONFIGS), dtype=complex)
    if stage in _STAGE_TERMS:
        for sign, a, mode, tmap in _STAGE_TERMS[stage]:
            amps[modes.index(mode)] += _spin_terms(sign, a, tmap, alpha, gamma)
    elif stage == N_STAGES:
        ports = circuit.detectors
        for name in DETECTORS:
            amps[modes.index(ports[name])] += 0.5 * branch_spin_state(name, alpha, gamma)
    else:
        raise ValueError(f"stage must be in 0..{N_STAGES}, got {stage}")
    return HybridState(modes, amps)


def apply_spin_ops(spin: np.ndarray, ops: Sequence[SpinZ]) -> np.ndarray:
    state = HybridState(((0, "H"),), np.asarray(spin, dtype=complex).reshape(1, N_CONFIGS))
    for op in ops:
        state = apply_element(state, op)
    return state.amps[0].copy()


def _candidate_corrections() -> list[tuple[SpinZ, ...]]:
    """Every sigma_z product on spins 1 and 2, with either global sign."""
    cands: list[tuple[SpinZ, ...]] = [(), (SpinZ(1),), (SpinZ(2),), (SpinZ(1), SpinZ(2))]
    cands += [(SpinZ(1, -1), SpinZ(1)), (SpinZ(1, -1),), (SpinZ(2, -1),), (SpinZ(1, -1), SpinZ(2))]
    return cands


@functools.cache
def derive_feed_forward(draws: int = 8, seed: int = 20240617) -> dict[str, tuple[SpinZ, ...]]:
    """Find, for each detector, the sigma_z product on spins 1/2 that restores the standard branch.

    Every candidate is checked for exact equality (sign included) against
    random control/target amplitudes; the shortest passing candidate wins.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(draws):
        a = rng.normal(size=4) + 1j * rng.normal(size=4)
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        samples.append((a / np.linalg.norm(a), g / np.linalg.norm(g)))
    table: dict[str, tuple[SpinZ, ...]] = {}
    for det in DETECTORS:
        passing = [
            ops
            for ops in _candidate_corrections()
            if all(
                np.allclose(
                    apply_spin_ops(branch_spin_state(det, a, g), ops),
                    branch_spin_state("D_H1", a, g),
                    atol=1e-12,
                )
                for a, g in samples
            )
        ]
        if not passing:
            raise RuntimeError(f"no sigma_z correction restores the {det} branch")
        table[det] = min(passing, key=len)
    return table


def feed_forward(detector: str, raw_spin: np.ndarray) -> np.ndarray:
    """Apply the detector-conditioned correction; unknown detectors are left uncorrected."""
    ops = derive_feed_forward().get(detector, ())
    return apply_spin_ops(raw_spin, ops)


@dataclass(frozen=True)
class StageCheckpoint:
    stage: int
    expected: HybridState
    observed: HybridState

    @property
    def distance(self) -> float:
        return state_distance(self.expected, self.observed)


@dataclass(frozen=True)
class OutcomeBranch:
    detector: str
    probability: float
    raw_spin: np.ndarray
    corrected_spin: np.ndarray

    @property
    def corrected_normalized(self) -> np.ndarray:
        return renormalized(self.corrected_spin)


@dataclass(frozen=True)
class ProtocolResult:
    alpha: np.ndarray
    gamma: np.ndarray
    branches: tuple[OutcomeBranch, ...]
    checkpoints: tuple[StageCheckpoint, ...] = field(default=())
    final_norm: float = 1.0

    @property
    def detection_probability(self) -> float:
        return float(sum(b.probability for b in self.branches))

    @property
    def loss(self) -> float:
        return 1.0 - self.detection_probability

    def branch(self, detector: str) -> OutcomeBranch:
        for b in self.branches:
            if b.detector == detector:
                return b
        raise KeyError(detector)

    def to_dict(self) -> dict:
        return {
            "input": {
                "control": [[z.real, z.imag] for z in self.alpha],
                "target": [[z.real, z.imag] for z in self.gamma],
            },
            "branches": [
                {
                    "detector": b.detector,
                    "probability": b.probability,
                    "corrected_spin": [[z.real, z.imag] for z in b.corrected_spin],
                }
                for b in self.branches
            ],
            "loss": self.loss,
            "checkpoint_distances": [cp.distance for cp in self.checkpoints],
        }


def resolve_reflections(
    params: CavityParams | Mapping[int, CavityParams], spins: int = 4
) -> dict[int, tuple[complex, complex]]:
    if isinstance(params, CavityParams):
        params = {s: params for s in range(1, spins + 1)}
    return {s: p.reflections() for s, p in params.items()}


def _is_ideal(reflections: Mapping[int, tuple[complex, complex]]) -> bool:
    return all(abs(rd - 1) < 1e-15 and abs(ru + 1) < 1e-15 for rd, ru in reflections.values())


def run_protocol(
    circuit: Circuit,
    params: CavityParams | Mapping[int, CavityParams],
    alpha: Sequence[complex],
    gamma: Sequence[complex],
    checkpoints: bool | None = None,
) -> ProtocolResult:
    """Send the photon through ``circuit``, detect it and correct the spins.

    ``alpha``/``gamma`` are printed-order qudit amplitudes (``|3>`` first).
    Checkpoints are recorded by default when the circuit carries stage
    markers and every cavity reflects ideally.
    """
    if circuit.spins != 4:
        raise CircuitValidityError(f"the gate protocol needs 4 spins, circuit declares {circuit.spins}")
    reflections = resolve_reflections(params, circuit.spins)
    bound = circuit.with_reflections(reflections)
    if checkpoints is None:
        checkpoints = bool(circuit.stages) and _is_ideal(reflections)

    state = prepare_initial(alpha, gamma, circuit.entry_mode, circuit.modes)
    observed = {0: state}
    markers: dict[int, list[int]] = {}
    for stage, pos in circuit.stages:
        markers.setdefault(pos, []).append(stage)
    for i, e in enumerate(bound.elements):
        for s in markers.get(i, []):
            observed[s] = state
        state = apply_element(state, e)
    for s in markers.get(len(bound.elements), []):
        observed[s] = state

    cps: list[StageCheckpoint] = []
    if checkpoints:
        for s in sorted(observed):
            cps.append(StageCheckpoint(s, checkpoint_expected(s, alpha, gamma, circuit), observed[s]))

    branches = []
    for name, mode in circuit.detectors.items():
        p, raw = project_detector(state, mode)
        branches.append(OutcomeBranch(name, p, raw, feed_forward(name, raw)))
    return ProtocolResult(
        alpha=np.asarray(alpha, dtype=complex),
        gamma=np.asarray(gamma, dtype=complex),
        branches=tuple(branches),
        checkpoints=tuple(cps),
        final_norm=norm_sq(state),
    )


def basis_amplitudes(q: int) -> np.ndarray:
    """Printed-order amplitude vector of the qudit basis state ``|q>``."""
    v = np.zeros(4, dtype=complex)
    v[3 - q] = 1.0
    return v


@dataclass(frozen=True)
class BasisRun:
    control: int
    target: int
    result: ProtocolResult

    def distribution(self, detector: str) -> np.ndarray:
        """Unnormalized probabilities over the 16 output configurations for one branch."""
        return np.abs(self.result.branch(detector).corrected_spin) ** 2


@dataclass(frozen=True)
class GateAction:
    runs: tuple[BasisRun, ...]
    params: object = None

    def run(self, c: int, t: int) -> BasisRun:
        return self.runs[config_index(c, t)]


def gate_action(circuit: Circuit, params: CavityParams | Mapping[int, CavityParams]) -> GateAction:
    """Protocol outcome for all 16 computational basis inputs, ordered by ``4c + t``."""
    runs = []
    for c in range(4):
        for t in range(4):
            res = run_protocol(circuit, params, basis_amplitudes(c), basis_amplitudes(t), checkpoints=False)
            runs.append(BasisRun(c, t, res))
    return GateAction(tuple(runs), params)
