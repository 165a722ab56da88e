"""Optical and spin elements acting linearly on :class:`HybridState`."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .state import H, N_CONFIGS, N_SPINS, POLARIZATIONS, V, HybridState, Mode, spin_mask

CAVITY_V_TOL = 1e-12
_S = 1 / math.sqrt(2)
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _S


class CircuitValidityError(ValueError):
    """Raised when a state or element violates the physical wiring rules."""


@dataclass(frozen=True)
class BeamSplitter:
    """``u -> (u + d)/sqrt2`` and ``d -> (u - d)/sqrt2`` for both polarizations."""

    path_u: int
    path_d: int


@dataclass(frozen=True)
class PolarizingBeamSplitter:
    """Transmits H and reflects V.

    H entering ``in_a`` leaves on ``out_t`` and V on ``out_r``; light entering
    ``in_b`` is routed the other way round. Without ``in_b`` the second input
    is the output port that is not ``in_a`` (if any).
    """

    in_a: int
    out_t: int
    out_r: int
    in_b: int | None = None


@dataclass(frozen=True)
class QuarterWave:
    """Polarization Hadamard on one path."""

    path: int


@dataclass(frozen=True)
class HalfWaveX:
    """``H <-> V`` on one path."""

    path: int


@dataclass(frozen=True)
class PhasePlate:
    """Phase flip on one path.

    ``conventional=False`` multiplies both polarizations by -1;
    ``conventional=True`` is ``|H><H| - |V><V|``.
    """

    path: int
    conventional: bool = False


@dataclass(frozen=True)
class CavityScatter:
    """H light on ``path`` reflects off the cavity of spin ``spin``."""

    spin: int
    path: int
    r_down: complex = 1.0
    r_up: complex = -1.0


@dataclass(frozen=True)
class SpinHadamard:
    spin: int


@dataclass(frozen=True)
class SpinZ:
    spin: int
    sign: int = 1


@dataclass(frozen=True)
class Detect:
    """Marks ``(path, pol)`` as the terminal port of detector ``name``."""

    path: int
    pol: str
    name: str


Element = Union[
    BeamSplitter,
    PolarizingBeamSplitter,
    QuarterWave,
    HalfWaveX,
    PhasePlate,
    CavityScatter,
    SpinHadamard,
    SpinZ,
    Detect,
]


def element_paths(e: Element) -> tuple[int, ...]:
    if isinstance(e, BeamSplitter):
        return (e.path_u, e.path_d)
    if isinstance(e, PolarizingBeamSplitter):
        ports = (e.in_a,) + ((e.in_b,) if e.in_b is not None else ()) + (e.out_t, e.out_r)
        return tuple(dict.fromkeys(ports))
    if isinstance(e, (QuarterWave, HalfWaveX, PhasePlate, CavityScatter, Detect)):
        return (e.path,)
    return ()


def element_spins(e: Element) -> tuple[int, ...]:
    if isinstance(e, (CavityScatter, SpinHadamard, SpinZ)):
        return (e.spin,)
    return ()


def pbs_second_input(e: PolarizingBeamSplitter) -> int | None:
    if e.in_b is not None:
        return e.in_b
    if e.in_a == e.out_t:
        return e.out_r
    if e.in_a == e.out_r:
        return e.out_t
    return None


def pbs_mode_map(e: PolarizingBeamSplitter) -> dict[Mode, Mode]:
    """Full mode permutation over every port of the PBS.

    The four physical routes are fixed; modes on output paths that are not
    inputs are sent back to the vacated input modes in sorted order so the
    map stays a bijection.
    """
    if e.out_t == e.out_r:
        raise CircuitValidityError(f"PBS outputs must differ: {e}")
    in_b = pbs_second_input(e)
    if in_b == e.in_a:
        raise CircuitValidityError(f"PBS inputs must differ: {e}")
    mapping: dict[Mode, Mode] = {(e.in_a, H): (e.out_t, H), (e.in_a, V): (e.out_r, V)}
    if in_b is not None:
        mapping[(in_b, H)] = (e.out_r, H)
        mapping[(in_b, V)] = (e.out_t, V)
    ports = [(p, pol) for p in element_paths(e) for pol in POLARIZATIONS]
    sources = sorted(m for m in ports if m not in mapping)
    targets = sorted(set(ports) - set(mapping.values()))
    mapping.update(zip(sources, targets))
    return mapping


def _spin_axis_op(amps: np.ndarray, spin: int, matrix: np.ndarray) -> np.ndarray:
    n = amps.shape[0]
    t = amps.reshape((n,) + (2,) * N_SPINS)
    t = np.moveaxis(np.tensordot(t, matrix, axes=([spin], [1])), -1, spin)
    return t.reshape(n, N_CONFIGS)


def apply_element(state: HybridState, e: Element, strict: bool = True) -> HybridState:
    """Apply one element.

    With ``strict`` set, V light reaching a cavity raises
    :class:`CircuitValidityError`; otherwise V passes the cavity untouched.
    """
    idx = {m: i for i, m in enumerate(state.modes)}
    amps = state.amps.copy()

    def rows(path: int) -> tuple[int, int]:
        try:
            return idx[(path, H)], idx[(path, V)]
        except KeyError:
            raise CircuitValidityError(f"path {path} is not part of the state basis") from None

    if isinstance(e, BeamSplitter):
        if e.path_u == e.path_d:
            raise CircuitValidityError(f"beam splitter needs two distinct paths: {e}")
        for u, d in zip(rows(e.path_u), rows(e.path_d)):
            au, ad = state.amps[u], state.amps[d]
            amps[u] = (au + ad) * _S
            amps[d] = (au - ad) * _S
    elif isinstance(e, PolarizingBeamSplitter):
        for p in element_paths(e):
            rows(p)
        for src, dst in pbs_mode_map(e).items():
            amps[idx[dst]] = state.amps[idx[src]]
    elif isinstance(e, QuarterWave):
        h, v = rows(e.path)
        amps[h] = (state.amps[h] + state.amps[v]) * _S
        amps[v] = (state.amps[h] - state.amps[v]) * _S
    elif isinstance(e, HalfWaveX):
        h, v = rows(e.path)
        amps[h], amps[v] = state.amps[v], state.amps[h]
    elif isinstance(e, PhasePlate):
        h, v = rows(e.path)
        amps[v] *= -1
        if not e.conventional:
            amps[h] *= -1
    elif isinstance(e, CavityScatter):
        h, v = rows(e.path)
        if strict:
            leak = float(np.sqrt(np.sum(np.abs(state.amps[v]) ** 2)))
            if leak > CAVITY_V_TOL:
                raise CircuitValidityError(
                    f"V-polarized amplitude {leak:.3g} incident on cavity of spin {e.spin} (path {e.path})"
                )
        amps[h] *= np.where(spin_mask(e.spin), e.r_up, e.r_down)
    elif isinstance(e, SpinHadamard):
        amps = _spin_axis_op(amps, e.spin, _HADAMARD)
    elif isinstance(e, SpinZ):
        amps *= np.where(spin_mask(e.spin), -e.sign, e.sign)
    elif isinstance(e, Detect):
        pass
    else:
        raise TypeError(f"unknown element {e!r}")
    return state.replace(amps)


def apply_elements(state: HybridState, elements: Sequence[Element], strict: bool = True) -> HybridState:
    for e in elements:
        state = apply_element(state, e, strict=strict)
    return state


def element_matrix(e: Element, basis: Sequence[Mode]) -> np.ndarray:
    """Dense matrix of ``e`` over ``basis x 16`` (mode-major ordering).

    Column ``i*16 + k`` is the image of the unit vector on ``(basis[i], k)``.
    V modes on a cavity path are mapped by the identity.
    """
    basis = tuple(basis)
    dim = len(basis) * N_CONFIGS
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        unit = np.zeros(dim, dtype=complex)
        unit[col] = 1.0
        image = apply_element(HybridState(basis, unit.reshape(len(basis), N_CONFIGS)), e, strict=False)
        out[:, col] = image.amps.reshape(-1)
    return out
