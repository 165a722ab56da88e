"""Gate quality figures: truth table, conversion matrix, fidelity, efficiency.

Fidelity and efficiency are averages over a fixed list of fiducial inputs.
Several reasonable definitions exist; :func:`calibrate` scores each candidate
against the reference values at ``r = 0.95, 0.96, 0.98, 1`` and the chosen
names are carried in every report.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .cavity import CavityParams
from .circuit import Circuit, builtin_gate_circuit
from .protocol import GateAction, ProtocolResult, basis_amplitudes, gate_action, run_protocol
from .state import N_CONFIGS, config_index, product_spin_state

# Reference values of efficiency / fidelity / worst-case conversion.
ANCHOR_R = (0.95, 0.96, 0.98, 1.0)
ANCHOR_EFFICIENCY = (0.8613, 0.8876, 0.9427, 1.0)
ANCHOR_FIDELITY = (0.9971, 0.9981, 0.9995, 1.0)
ANCHOR_CONVERSION_R = 0.98
ANCHOR_MIN_CONVERSION = 0.9227
EFFICIENCY_TOL = 0.005
FIDELITY_TOL = 0.003
CONVERSION_TOL = 0.005

MODE_MATCH_ANCHOR = (0.99, 1e-4)

UNIFORM = (0.5, 0.5, 0.5, 0.5)


class UndefinedFidelityError(ZeroDivisionError):
    """The photon is never detected, so a detection-conditioned fidelity does not exist."""


def ideal_cnot44(c: int, t: int) -> tuple[int, int]:
    if not (0 <= c < 4 and 0 <= t < 4):
        raise ValueError(f"qudit values must be in 0..3, got ({c}, {t})")
    return c, (c + t) % 4


def ideal_output(alpha: Sequence[complex], gamma: Sequence[complex]) -> np.ndarray:
    """Ideal gate applied to printed-order control/target amplitudes."""
    psi = product_spin_state(alpha, gamma)
    out = np.zeros(N_CONFIGS, dtype=complex)
    for k in range(N_CONFIGS):
        c, t = divmod(k, 4)
        out[config_index(*ideal_cnot44(c, t))] += psi[k]
    return out


def _ideal_index(i: int) -> int:
    return config_index(*ideal_cnot44(*divmod(i, 4)))


def conversion_matrix(report: GateAction, conditioned: bool = False) -> np.ndarray:
    """Entry ``(i, j)``: probability of basis output ``j`` for basis input ``i``.

    Loss-inclusive by default (rows sum to the detection probability);
    ``conditioned=True`` renormalizes each row by it.
    """
    m = np.zeros((N_CONFIGS, N_CONFIGS))
    for run in report.runs:
        i = config_index(run.control, run.target)
        m[i] = sum(np.abs(b.corrected_spin) ** 2 for b in run.result.branches)
        if conditioned:
            total = m[i].sum()
            if total > 0:
                m[i] /= total
    return m


def min_conversion(matrix: np.ndarray) -> float:
    return float(min(matrix[i, _ideal_index(i)] for i in range(N_CONFIGS)))


@dataclass(frozen=True)
class FiducialRun:
    name: str
    alpha: np.ndarray
    gamma: np.ndarray
    result: ProtocolResult

    @property
    def efficiency(self) -> float:
        return self.result.detection_probability

    @property
    def success(self) -> float:
        """Loss-inclusive overlap ``sum_b |<ideal|psi_b>|^2``."""
        target = ideal_output(self.alpha, self.gamma)
        return float(sum(abs(np.vdot(target, b.corrected_spin)) ** 2 for b in self.result.branches))

    @property
    def fidelity(self) -> float:
        p = self.efficiency
        if p <= 0:
            raise UndefinedFidelityError(f"no detection probability for fiducial input {self.name}")
        return self.success / p


def fiducial_inputs(kind: str = "basis+uniform") -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Fixed, ordered fiducial inputs: ``basis``, ``uniform`` or ``basis+uniform``."""
    out = []
    if kind in ("basis", "basis+uniform"):
        for c in range(4):
            for t in range(4):
                out.append((f"|{c},{t}>", basis_amplitudes(c), basis_amplitudes(t)))
    if kind in ("uniform", "basis+uniform"):
        u = np.asarray(UNIFORM, dtype=complex)
        out.append(("uniform", u, u))
    if not out:
        raise ValueError(f"unknown fiducial set {kind!r}")
    return out


@dataclass(frozen=True)
class Evaluation:
    """Everything the metric definitions need at one parameter point."""

    action: GateAction
    fiducials: tuple[FiducialRun, ...]

    def subset(self, kind: str) -> list[FiducialRun]:
        names = {n for n, _, _ in fiducial_inputs(kind)}
        return [f for f in self.fiducials if f.name in names]


def evaluate(circuit: Circuit, params: CavityParams | Mapping[int, CavityParams]) -> Evaluation:
    action = gate_action(circuit, params)
    runs = []
    for name, a, g in fiducial_inputs("basis+uniform"):
        if name == "uniform":
            res = run_protocol(circuit, params, a, g, checkpoints=False)
        else:
            c, t = int(name[1]), int(name[3])
            res = action.run(c, t).result
        runs.append(FiducialRun(name, a, g, res))
    return Evaluation(action, tuple(runs))


def _mean(xs: Sequence[float]) -> float:
    return float(np.mean(xs))


def fidelity(ev: Evaluation, fiducial: str = "basis+uniform") -> float:
    """Mean detection-conditioned overlap of the corrected output with the ideal one."""
    return _mean([f.fidelity for f in ev.subset(fiducial)])


def efficiency(ev: Evaluation, fiducial: str = "basis+uniform") -> float:
    """Mean total detection probability."""
    return _mean([f.efficiency for f in ev.subset(fiducial)])


FIDELITY_DEFINITIONS: dict[str, Callable[[Evaluation], float]] = {
    "conditioned/basis+uniform": lambda ev: fidelity(ev, "basis+uniform"),
    "conditioned/basis": lambda ev: fidelity(ev, "basis"),
    "conditioned/uniform": lambda ev: fidelity(ev, "uniform"),
    "loss-inclusive/basis+uniform": lambda ev: _mean([f.success for f in ev.subset("basis+uniform")]),
}

EFFICIENCY_DEFINITIONS: dict[str, Callable[[Evaluation], float]] = {
    "detected/basis+uniform": lambda ev: efficiency(ev, "basis+uniform"),
    "detected/basis": lambda ev: efficiency(ev, "basis"),
    "detected/uniform": lambda ev: efficiency(ev, "uniform"),
    "surviving/basis+uniform": lambda ev: _mean([f.result.final_norm for f in ev.subset("basis+uniform")]),
    "success/basis+uniform": lambda ev: _mean([f.success for f in ev.subset("basis+uniform")]),
}

CONVERSION_DEFINITIONS: dict[str, Callable[[Evaluation], float]] = {
    "loss-inclusive": lambda ev: min_conversion(conversion_matrix(ev.action)),
    "conditioned": lambda ev: min_conversion(conversion_matrix(ev.action, conditioned=True)),
}


@dataclass(frozen=True)
class Candidate:
    name: str
    values: tuple[float, ...]
    residuals: tuple[float, ...]
    tolerance: float

    @property
    def max_residual(self) -> float:
        return max(abs(x) for x in self.residuals)

    @property
    def within_tolerance(self) -> bool:
        return self.max_residual <= self.tolerance


@dataclass(frozen=True)
class Calibration:
    fidelity: tuple[Candidate, ...]
    efficiency: tuple[Candidate, ...]
    conversion: tuple[Candidate, ...]

    @staticmethod
    def _best(cands: tuple[Candidate, ...]) -> Candidate:
        """Closest candidate if any meets the tolerance, else the first (default) one."""
        best = min(cands, key=lambda c: c.max_residual)
        return best if best.within_tolerance else cands[0]

    @property
    def fidelity_definition(self) -> Candidate:
        return self._best(self.fidelity)

    @property
    def efficiency_definition(self) -> Candidate:
        return self._best(self.efficiency)

    @property
    def conversion_definition(self) -> Candidate:
        return self._best(self.conversion)

    @property
    def anchors_met(self) -> bool:
        """True when the chosen fidelity and efficiency definitions match every anchor."""
        return self.fidelity_definition.within_tolerance and self.efficiency_definition.within_tolerance

    def to_dict(self) -> dict:
        def block(cands: tuple[Candidate, ...], chosen: Candidate) -> dict:
            return {
                "chosen": chosen.name,
                "within_tolerance": chosen.within_tolerance,
                "tolerance": chosen.tolerance,
                "candidates": {
                    c.name: {"values": list(c.values), "residuals": list(c.residuals)} for c in cands
                },
            }

        return {
            "anchor_r": list(ANCHOR_R),
            "anchors_met": self.anchors_met,
            "fidelity": block(self.fidelity, self.fidelity_definition),
            "efficiency": block(self.efficiency, self.efficiency_definition),
            "min_conversion": block(self.conversion, self.conversion_definition),
        }


def _score(
    defs: Mapping[str, Callable[[Evaluation], float]],
    evals: Sequence[Evaluation],
    anchors: Sequence[float],
    tol: float,
) -> tuple[Candidate, ...]:
    out = []
    for name, fn in defs.items():
        values = tuple(fn(ev) for ev in evals)
        out.append(Candidate(name, values, tuple(v - a for v, a in zip(values, anchors)), tol))
    return tuple(out)


@functools.cache
def calibrate() -> Calibration:
    """Score every candidate definition on the built-in circuit with ``r_down = -r_up = r``."""
    circuit = builtin_gate_circuit()
    evals = [evaluate(circuit, CavityParams.symmetric(r)) for r in ANCHOR_R]
    conv_eval = [evals[ANCHOR_R.index(ANCHOR_CONVERSION_R)]]
    return Calibration(
        fidelity=_score(FIDELITY_DEFINITIONS, evals, ANCHOR_FIDELITY, FIDELITY_TOL),
        efficiency=_score(EFFICIENCY_DEFINITIONS, evals, ANCHOR_EFFICIENCY, EFFICIENCY_TOL),
        conversion=_score(CONVERSION_DEFINITIONS, conv_eval, (ANCHOR_MIN_CONVERSION,), CONVERSION_TOL),
    )


@dataclass(frozen=True)
class GateMetrics:
    conversion_matrix: np.ndarray
    min_conversion: float
    fidelity: float
    efficiency: float
    definitions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "conversion_matrix": self.conversion_matrix.tolist(),
            "min_conversion": self.min_conversion,
            "fidelity": self.fidelity,
            "efficiency": self.efficiency,
            "definitions": dict(self.definitions),
        }


def gate_metrics(
    circuit: Circuit,
    params: CavityParams | Mapping[int, CavityParams],
    calibration: Calibration | None = None,
) -> GateMetrics:
    cal = calibration or calibrate()
    ev = evaluate(circuit, params)
    f_name = cal.fidelity_definition.name
    e_name = cal.efficiency_definition.name
    c_name = cal.conversion_definition.name
    return GateMetrics(
        conversion_matrix=conversion_matrix(ev.action, conditioned=(c_name == "conditioned")),
        min_conversion=CONVERSION_DEFINITIONS[c_name](ev),
        fidelity=FIDELITY_DEFINITIONS[f_name](ev),
        efficiency=EFFICIENCY_DEFINITIONS[e_name](ev),
        definitions={"fidelity": f_name, "efficiency": e_name, "min_conversion": c_name},
    )


@dataclass(frozen=True)
class SweepRow:
    r: float
    efficiency: float
    fidelity: float
    min_conversion: float


def sweep(
    r_grid: Sequence[float],
    circuit: Circuit | None = None,
    calibration: Calibration | None = None,
) -> list[SweepRow]:
    """One row per grid point with ``r_down = r`` and ``r_up = -r``, in grid order."""
    circuit = circuit or builtin_gate_circuit()
    rows = []
    for r in r_grid:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reflection magnitude must lie in [0, 1], got {r}")
        m = gate_metrics(circuit, CavityParams.symmetric(r), calibration)
        rows.append(SweepRow(float(r), m.efficiency, m.fidelity, m.min_conversion))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["r,efficiency,fidelity,min_conversion"]
    for row in rows:
        lines.append(",".join(f"{x:.12g}" for x in (row.r, row.efficiency, row.fidelity, row.min_conversion)))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DecoherenceParams:
    """``t_total`` and ``t2e`` in seconds; ``mode_match`` in (0, 1]."""

    t_total: float
    t2e: float
    mode_match: float = 1.0

    def __post_init__(self):
        if self.t_total < 0 or self.t2e <= 0:
            raise ValueError("interaction time must be >= 0 and T2e > 0")
        if not 0 < self.mode_match <= 1:
            raise ValueError(f"mode-matching efficiency must be in (0, 1], got {self.mode_match}")


def spin_decoherence_penalty(p: DecoherenceParams) -> float:
    """Fidelity factor ``(exp(-t_T / T2e) + 1) / 2`` of one spin."""
    return (math.exp(-p.t_total / p.t2e) + 1) / 2


def spin_decoherence_reduction(p: DecoherenceParams) -> float:
    return 1.0 - spin_decoherence_penalty(p)


def mode_match_penalty(p: DecoherenceParams) -> float:
    """Fidelity reduction from imperfect mode matching.

    Linear in ``1 - mode_match`` through the single reference point
    ``(0.99, 1e-4)``; an extrapolation, not a physical model.
    """
    eff, reduction = MODE_MATCH_ANCHOR
    return reduction / (1 - eff) * (1 - p.mode_match)
