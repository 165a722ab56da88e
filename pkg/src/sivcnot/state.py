"""Joint photon/spin state vectors.

A :class:`HybridState` stores one complex amplitude for every pair of a
photon mode ``(path, polarization)`` and a configuration of the four spins.
Spin configurations are indexed ``8*s1 + 4*s2 + 2*s3 + s4`` with ``down=0`` and
``up=1``, which is the same as ``4*c + t`` for control qudit ``c = 2*s1 + s2``
and target qudit ``t = 2*s3 + s4``.

Qudit amplitude vectors passed in from the outside follow the printed order
``(a1, a2, a3, a4)`` for ``|3>, |2>, |1>, |0>`` (descending qudit value).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

H = "H"
V = "V"
POLARIZATIONS = (H, V)

N_SPINS = 4
N_CONFIGS = 2**N_SPINS
NORM_TOL = 1e-9

Mode = tuple[int, str]


class NormalizationError(ValueError):
    """Raised when a qudit amplitude vector is not normalized."""

    def __init__(self, name: str, norm: float):
        super().__init__(f"{name} amplitudes are not normalized: sum |a|^2 = {norm:.12g}")
        self.name = name
        self.norm = norm


class DetectorError(KeyError):
    """Raised when projecting onto a mode that is not a detector port."""


def config_index(c: int, t: int) -> int:
    return 4 * c + t


def config_qudits(index: int) -> tuple[int, int]:
    return divmod(index, 4)


def spin_bits(index: int) -> tuple[int, int, int, int]:
    return tuple((index >> (N_SPINS - 1 - k)) & 1 for k in range(N_SPINS))  # type: ignore[return-value]


def spin_mask(spin: int) -> np.ndarray:
    """Boolean vector over configurations: True where ``spin`` (1-based) is up."""
    shift = N_SPINS - spin
    return ((np.arange(N_CONFIGS) >> shift) & 1).astype(bool)


def qudit_vector(amps: Sequence[complex]) -> np.ndarray:
    """Convert printed-order amplitudes ``(|3>, |2>, |1>, |0>)`` to an ascending vector."""
    a = np.asarray(amps, dtype=complex)
    if a.shape != (4,):
        raise ValueError(f"expected 4 qudit amplitudes, got shape {a.shape}")
    return a[::-1].copy()


def product_spin_state(alpha: Sequence[complex], gamma: Sequence[complex]) -> np.ndarray:
    """Spin vector of ``|psi>_c (x) |psi>_t`` with printed-order amplitudes."""
    return np.kron(qudit_vector(alpha), qudit_vector(gamma))


@dataclass(frozen=True, eq=False)
class HybridState:
    """Amplitudes over ``modes x 16`` spin configurations.

    ``amps[i, k]`` is the amplitude of photon mode ``modes[i]`` with the
    spins in configuration ``k``. Instances are treated as immutable; every
    operation returns a new state.
    """

    modes: tuple[Mode, ...]
    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex)
        if amps.shape != (len(self.modes), N_CONFIGS):
            raise ValueError(f"amplitude shape {amps.shape} does not match {len(self.modes)} modes")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def zeros(cls, modes: Iterable[Mode]) -> HybridState:
        modes = tuple(modes)
        return cls(modes, np.zeros((len(modes), N_CONFIGS), dtype=complex))

    def index(self, mode: Mode) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise KeyError(f"mode {mode} is not part of this state") from None

    def row(self, mode: Mode) -> np.ndarray:
        return self.amps[self.index(mode)]

    def replace(self, amps: np.ndarray) -> HybridState:
        return HybridState(self.modes, amps)

    def __add__(self, other: HybridState) -> HybridState:
        _check_same_basis(self, other)
        return self.replace(self.amps + other.amps)

    def __sub__(self, other: HybridState) -> HybridState:
        _check_same_basis(self, other)
        return self.replace(self.amps - other.amps)

    def __mul__(self, k: complex) -> HybridState:
        return self.replace(self.amps * k)

    __rmul__ = __mul__

    def nonzero_terms(self, tol: float = 1e-12) -> list[tuple[Mode, int, complex]]:
        rows, cols = np.nonzero(np.abs(self.amps) > tol)
        return [(self.modes[i], int(k), complex(self.amps[i, k])) for i, k in zip(rows, cols)]


def _check_same_basis(a: HybridState, b: HybridState) -> None:
    if a.modes != b.modes:
        raise ValueError("states are defined over different mode bases")


def modes_for_paths(paths: Iterable[int]) -> tuple[Mode, ...]:
    return tuple((p, pol) for p in paths for pol in POLARIZATIONS)


def prepare_initial(
    alpha: Sequence[complex],
    gamma: Sequence[complex],
    mode: Mode,
    modes: Iterable[Mode] | None = None,
) -> HybridState:
    """Single photon in ``mode`` times the product control/target spin state.

    ``alpha`` and ``gamma`` are in printed order (``|3>`` first). ``modes``
    defaults to the two polarizations of ``mode``'s path.
    """
    for name, amps in (("control", alpha), ("target", gamma)):
        norm = float(np.sum(np.abs(np.asarray(amps, dtype=complex)) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError(name, norm)
    modes = tuple(modes) if modes is not None else modes_for_paths([mode[0]])
    state = np.zeros((len(modes), N_CONFIGS), dtype=complex)
    state[modes.index(mode)] = product_spin_state(alpha, gamma)
    return HybridState(modes, state)


def norm_sq(state: HybridState | np.ndarray) -> float:
    amps = state.amps if isinstance(state, HybridState) else np.asarray(state)
    return float(np.sum(np.abs(amps) ** 2))


def project_detector(
    state: HybridState, mode: Mode, detector_modes: Iterable[Mode] | None = None
) -> tuple[float, np.ndarray]:
    """Probability of a click on ``mode`` and the unnormalized spin state left behind.

    When ``detector_modes`` is given, ``mode`` must be one of them.
    """
    if detector_modes is not None and mode not in set(detector_modes):
        raise DetectorError(f"{mode} is not a declared detector port")
    spin = state.row(mode).copy()
    return norm_sq(spin), spin


def renormalized(spin: np.ndarray) -> np.ndarray:
    n = np.sqrt(norm_sq(spin))
    if n == 0:
        raise ZeroDivisionError("cannot renormalize a zero spin state")
    return spin / n


def state_distance(a: HybridState | np.ndarray, b: HybridState | np.ndarray) -> float:
    """Largest entrywise difference after aligning the global phase of ``b`` to ``a``.

    The phase used is the least-squares optimum ``arg <b|a>``; states equal up
    to a global phase give 0.
    """
    if isinstance(a, HybridState) and isinstance(b, HybridState):
        _check_same_basis(a, b)
    x = a.amps if isinstance(a, HybridState) else np.asarray(a, dtype=complex)
    y = b.amps if isinstance(b, HybridState) else np.asarray(b, dtype=complex)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    overlap = np.vdot(y, x)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(x - phase * y), initial=0.0))
