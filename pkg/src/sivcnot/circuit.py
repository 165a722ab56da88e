"""Line-oriented netlist format for photon/spin circuits.

One instruction per line, ``#`` starts a comment, keywords are case-insensitive::

    paths 3 4 5          # declare path labels
    spins 4              # number of spins
    input 3 H            # entry mode of the photon (default: first path, H)
    bs 3 4               # beam splitter, up/down paths
    pbs 4 [11] -> 4 11   # PBS: in_a [in_b] -> out_t out_r
    qwp 4                # quarter-wave plate (polarization Hadamard)
    x 4                  # half-wave plate at 45 deg (H <-> V)
    pz 4 [literal|conventional]
    cavity 2 4           # photon on path 4 reflects off the cavity of spin 2
    spinh 3              # spin Hadamard
    spinz 1 [+|-]        # spin sigma_z, optionally negated
    detect 7 H D_H1      # terminal detector port
    stage 1              # checkpoint boundary marker
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .optics import (
    BeamSplitter,
    CavityScatter,
    Detect,
    Element,
    HalfWaveX,
    PhasePlate,
    PolarizingBeamSplitter,
    QuarterWave,
    SpinHadamard,
    SpinZ,
    element_paths,
    element_spins,
    pbs_second_input,
)
from .state import H, POLARIZATIONS, Mode, modes_for_paths

ERROR = "error"
WARNING = "warning"

_INT = re.compile(r"^[0-9]+$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    severity: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.severity}: {self.message}"


class NetlistError(ValueError):
    """Parsing or validation failed; ``diagnostics`` holds every problem found."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Circuit:
    """Ordered element list over declared paths and spins.

    ``stages`` maps a checkpoint number to the count of elements applied
    before that checkpoint is taken.
    """

    paths: tuple[int, ...]
    spins: int = 4
    elements: tuple[Element, ...] = ()
    input_mode: Mode | None = None
    stages: tuple[tuple[int, int], ...] = field(default=())

    @property
    def entry_mode(self) -> Mode:
        if self.input_mode is not None:
            return self.input_mode
        if not self.paths:
            raise ValueError("circuit declares no paths")
        return (self.paths[0], H)

    @property
    def modes(self) -> tuple[Mode, ...]:
        return modes_for_paths(self.paths)

    @property
    def detectors(self) -> dict[str, Mode]:
        return {e.name: (e.path, e.pol) for e in self.elements if isinstance(e, Detect)}

    def with_reflections(self, reflections: dict[int, tuple[complex, complex]]) -> Circuit:
        """Copy with each cavity's ``(r_down, r_up)`` taken from ``reflections[spin]``."""
        elements = []
        for e in self.elements:
            if isinstance(e, CavityScatter) and e.spin in reflections:
                r_down, r_up = reflections[e.spin]
                e = CavityScatter(e.spin, e.path, complex(r_down), complex(r_up))
            elements.append(e)
        return Circuit(self.paths, self.spins, tuple(elements), self.input_mode, self.stages)


def _check_elements(
    paths: Iterable[int],
    spins: int,
    items: Iterable[tuple[int, Element]],
    input_mode: Mode | None = None,
) -> list[Diagnostic]:
    """Structural checks shared by the parser and :func:`validate`."""
    declared = set(paths)
    out: list[Diagnostic] = []
    terminal: dict[int, str] = {}
    detector_names: set[str] = set()
    detector_modes: set[Mode] = set()
    used: set[int] = set()
    if input_mode is not None:
        used.add(input_mode[0])
    for line, e in items:
        ref = element_paths(e)
        for p in ref:
            if p not in declared:
                out.append(Diagnostic(line, ERROR, f"undeclared path {p}"))
            elif p in terminal and not isinstance(e, Detect):
                out.append(
                    Diagnostic(line, ERROR, f"path {p} is used after detector {terminal[p]} terminated it")
                )
        for s in element_spins(e):
            if not 1 <= s <= spins:
                out.append(Diagnostic(line, ERROR, f"spin index {s} out of range 1..{spins}"))
        if isinstance(e, BeamSplitter) and e.path_u == e.path_d:
            out.append(Diagnostic(line, ERROR, "beam splitter paths must differ"))
        if isinstance(e, PolarizingBeamSplitter):
            if e.out_t == e.out_r:
                out.append(Diagnostic(line, ERROR, f"pbs has duplicate outputs {e.out_t}"))
            if e.in_b is not None and e.in_b == e.in_a:
                out.append(Diagnostic(line, ERROR, f"pbs has duplicate inputs {e.in_a}"))
            in_b = pbs_second_input(e)
            for p in (e.out_t, e.out_r):
                if p not in (e.in_a, in_b) and p in used:
                    out.append(
                        Diagnostic(line, WARNING, f"pbs output path {p} already carries light from earlier elements")
                    )
        if isinstance(e, SpinZ) and e.sign not in (1, -1):
            out.append(Diagnostic(line, ERROR, f"spinz sign must be +1 or -1, got {e.sign}"))
        if isinstance(e, Detect):
            if e.pol not in POLARIZATIONS:
                out.append(Diagnostic(line, ERROR, f"polarization must be H or V, got {e.pol!r}"))
            if e.name in detector_names:
                out.append(Diagnostic(line, ERROR, f"duplicate detector name {e.name}"))
            if (e.path, e.pol) in detector_modes:
                out.append(Diagnostic(line, ERROR, f"port ({e.path}, {e.pol}) already has a detector"))
            detector_names.add(e.name)
            detector_modes.add((e.path, e.pol))
        used.update(ref)
        if isinstance(e, Detect):
            terminal.setdefault(e.path, e.name)
    return out


def validate(c: Circuit) -> list[Diagnostic]:
    """Structural diagnostics for a circuit; ``line`` is the 1-based element position."""
    out: list[Diagnostic] = []
    if len(set(c.paths)) != len(c.paths):
        out.append(Diagnostic(0, ERROR, "duplicate path labels"))
    if c.spins < 1:
        out.append(Diagnostic(0, ERROR, f"spin count must be positive, got {c.spins}"))
    if c.input_mode is not None and c.input_mode[0] not in c.paths:
        out.append(Diagnostic(0, ERROR, f"undeclared path {c.input_mode[0]}"))
    numbers = [s for s, _ in c.stages]
    if len(set(numbers)) != len(numbers):
        out.append(Diagnostic(0, ERROR, "duplicate stage markers"))
    positions = [pos for _, pos in c.stages]
    if positions != sorted(positions) or any(not 0 <= p <= len(c.elements) for p in positions):
        out.append(Diagnostic(0, ERROR, "stage markers out of order"))
    out.extend(_check_elements(c.paths, c.spins, enumerate(c.elements, start=1), c.input_mode))
    return out


def _ints(tokens: list[str], line: int, out: list[Diagnostic]) -> list[int] | None:
    vals = []
    for tok in tokens:
        if not _INT.match(tok):
            out.append(Diagnostic(line, ERROR, f"expected a non-negative integer, got {tok!r}"))
            return None
        vals.append(int(tok))
    return vals


def _parse_pol(tok: str, line: int, out: list[Diagnostic]) -> str | None:
    pol = tok.upper()
    if pol not in POLARIZATIONS:
        out.append(Diagnostic(line, ERROR, f"polarization must be H or V, got {tok!r}"))
        return None
    return pol


_ARITY = {
    "bs": (2, 2),
    "qwp": (1, 1),
    "x": (1, 1),
    "pz": (1, 2),
    "cavity": (2, 2),
    "spinh": (1, 1),
    "spinz": (1, 2),
    "detect": (3, 3),
    "stage": (1, 1),
    "spins": (1, 1),
    "input": (1, 2),
}


def _decode(source: str | bytes) -> tuple[str | None, list[Diagnostic]]:
    if isinstance(source, str):
        return source, []
    try:
        return source.decode("utf-8"), []
    except UnicodeDecodeError as exc:
        line = source[: exc.start].count(b"\n") + 1
        return None, [Diagnostic(line, ERROR, "input is not valid UTF-8")]


def parse_circuit(source: str | bytes) -> Circuit:
    """Parse netlist text, raising :class:`NetlistError` with line-numbered diagnostics."""
    text, out = _decode(source)
    if text is None:
        raise NetlistError(out)

    paths: list[int] | None = None
    spins: int | None = None
    input_mode: Mode | None = None
    elements: list[tuple[int, Element]] = []
    stages: list[tuple[int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        kw, args = tokens[0].lower(), tokens[1:]

        if kw in _ARITY:
            lo, hi = _ARITY[kw]
            if not lo <= len(args) <= hi:
                want = str(lo) if lo == hi else f"{lo}-{hi}"
                out.append(Diagnostic(lineno, ERROR, f"'{kw}' takes {want} argument(s), got {len(args)}"))
                continue

        if kw == "paths":
            vals = _ints(args, lineno, out)
            if vals is None:
                continue
            if not vals:
                out.append(Diagnostic(lineno, ERROR, "'paths' needs at least one label"))
            elif paths is not None:
                out.append(Diagnostic(lineno, ERROR, "paths declared twice"))
            elif len(set(vals)) != len(vals):
                out.append(Diagnostic(lineno, ERROR, "duplicate path labels"))
            else:
                paths = vals
        elif kw == "spins":
            vals = _ints(args, lineno, out)
            if vals is None:
                continue
            if spins is not None:
                out.append(Diagnostic(lineno, ERROR, "spins declared twice"))
            elif elements:
                out.append(Diagnostic(lineno, ERROR, "'spins' must precede all elements"))
            elif vals[0] < 1:
                out.append(Diagnostic(lineno, ERROR, "spin count must be positive"))
            else:
                spins = vals[0]
        elif kw == "input":
            vals = _ints(args[:1], lineno, out)
            pol = _parse_pol(args[1], lineno, out) if len(args) == 2 else H
            if vals is None or pol is None:
                continue
            if input_mode is not None:
                out.append(Diagnostic(lineno, ERROR, "input declared twice"))
            elif paths is None or vals[0] not in paths:
                out.append(Diagnostic(lineno, ERROR, f"undeclared path {vals[0]}"))
            else:
                input_mode = (vals[0], pol)
        elif kw == "stage":
            vals = _ints(args, lineno, out)
            if vals is None:
                continue
            if any(s == vals[0] for s, _ in stages):
                out.append(Diagnostic(lineno, ERROR, f"stage {vals[0]} declared twice"))
            else:
                stages.append((vals[0], len(elements)))
        elif kw == "bs":
            vals = _ints(args, lineno, out)
            if vals is not None:
                elements.append((lineno, BeamSplitter(*vals)))
        elif kw == "pbs":
            if "->" not in args:
                out.append(Diagnostic(lineno, ERROR, "'pbs' needs '->' between inputs and outputs"))
                continue
            k = args.index("->")
            ins, outs = args[:k], args[k + 1 :]
            if len(ins) not in (1, 2) or len(outs) != 2:
                out.append(Diagnostic(lineno, ERROR, "'pbs' takes 1-2 inputs and exactly 2 outputs"))
                continue
            vi, vo = _ints(ins, lineno, out), _ints(outs, lineno, out)
            if vi is None or vo is None:
                continue
            in_b = vi[1] if len(vi) == 2 else None
            elements.append((lineno, PolarizingBeamSplitter(vi[0], vo[0], vo[1], in_b)))
        elif kw in ("qwp", "x"):
            vals = _ints(args, lineno, out)
            if vals is not None:
                cls = QuarterWave if kw == "qwp" else HalfWaveX
                elements.append((lineno, cls(vals[0])))
        elif kw == "pz":
            vals = _ints(args[:1], lineno, out)
            variant = args[1].lower() if len(args) == 2 else "literal"
            if variant not in ("literal", "conventional"):
                out.append(Diagnostic(lineno, ERROR, f"pz variant must be literal or conventional, got {args[1]!r}"))
                continue
            if vals is not None:
                elements.append((lineno, PhasePlate(vals[0], variant == "conventional")))
        elif kw == "cavity":
            vals = _ints(args, lineno, out)
            if vals is not None:
                elements.append((lineno, CavityScatter(vals[0], vals[1])))
        elif kw == "spinh":
            vals = _ints(args, lineno, out)
            if vals is not None:
                elements.append((lineno, SpinHadamard(vals[0])))
        elif kw == "spinz":
            vals = _ints(args[:1], lineno, out)
            sign_tok = args[1] if len(args) == 2 else "+"
            if sign_tok not in ("+", "-"):
                out.append(Diagnostic(lineno, ERROR, f"spinz sign must be + or -, got {sign_tok!r}"))
                continue
            if vals is not None:
                elements.append((lineno, SpinZ(vals[0], 1 if sign_tok == "+" else -1)))
        elif kw == "detect":
            vals = _ints(args[:1], lineno, out)
            pol = _parse_pol(args[1], lineno, out)
            if not _NAME.match(args[2]):
                out.append(Diagnostic(lineno, ERROR, f"invalid detector name {args[2]!r}"))
                continue
            if vals is not None and pol is not None:
                elements.append((lineno, Detect(vals[0], pol, args[2])))
        else:
            out.append(Diagnostic(lineno, ERROR, f"unknown keyword {tokens[0]!r}"))

    n_spins = spins if spins is not None else 4
    out.extend(_check_elements(paths or (), n_spins, elements, input_mode))
    errors = [d for d in out if d.severity == ERROR]
    if errors:
        raise NetlistError(sorted(out, key=lambda d: d.line))
    if paths is None:
        raise NetlistError([Diagnostic(1, ERROR, "no 'paths' declaration")])
    return Circuit(
        paths=tuple(paths),
        spins=n_spins,
        elements=tuple(e for _, e in elements),
        input_mode=input_mode,
        stages=tuple(stages),
    )


def _element_line(e: Element) -> str:
    if isinstance(e, BeamSplitter):
        return f"bs {e.path_u} {e.path_d}"
    if isinstance(e, PolarizingBeamSplitter):
        ins = f"{e.in_a}" if e.in_b is None else f"{e.in_a} {e.in_b}"
        return f"pbs {ins} -> {e.out_t} {e.out_r}"
    if isinstance(e, QuarterWave):
        return f"qwp {e.path}"
    if isinstance(e, HalfWaveX):
        return f"x {e.path}"
    if isinstance(e, PhasePlate):
        return f"pz {e.path} conventional" if e.conventional else f"pz {e.path}"
    if isinstance(e, CavityScatter):
        return f"cavity {e.spin} {e.path}"
    if isinstance(e, SpinHadamard):
        return f"spinh {e.spin}"
    if isinstance(e, SpinZ):
        return f"spinz {e.spin}" if e.sign == 1 else f"spinz {e.spin} -"
    if isinstance(e, Detect):
        return f"detect {e.path} {e.pol} {e.name}"
    raise TypeError(f"unknown element {e!r}")


def serialize(c: Circuit) -> str:
    """Canonical netlist text. Cavity reflection values are not part of the format."""
    lines = ["paths " + " ".join(str(p) for p in c.paths), f"spins {c.spins}"]
    if c.input_mode is not None:
        lines.append(f"input {c.input_mode[0]} {c.input_mode[1]}")
    markers: dict[int, list[int]] = {}
    for stage, pos in c.stages:
        markers.setdefault(pos, []).append(stage)
    for i in range(len(c.elements) + 1):
        lines.extend(f"stage {s}" for s in markers.get(i, []))
        if i < len(c.elements):
            lines.append(_element_line(c.elements[i]))
    return "\n".join(lines) + "\n"


# Stage-1 wiring: each interferometer puts its cavity on the "d" arm, which
# sends spin-down light out of the port it entered and spin-up light out of the
# other one, with no relative sign. Paths 11 and 12 are the V bypass arms of
# the polarization interferometers on paths 4 and 5; 9 and 10 carry the
# reflected outputs of the final PBSs.
BUILTIN_SOURCE = """\
# 2-qudit 4x4 CNOT on four cavity-coupled SiV spins
paths 3 4 5 6 7 8 9 10 11 12
spins 4
input 3 H

# stage 1: route control qudit |0>,|1>,|2>,|3> onto paths 3,4,6,5
bs 3 6              # BS1
cavity 1 6          # SiV1
bs 3 6              # BS2
bs 3 4              # BS3
bs 5 6              # BS4
cavity 2 4          # SiV2
cavity 2 6          # SiV2
bs 3 4              # BS5
bs 5 6              # BS6
stage 1

# stage 2: bit flip of spin 4 on paths 4 and 5
spinh 4
cavity 4 4
cavity 4 5
spinh 4
stage 2

# stage 3: spin-4-conditioned polarization flip on paths 4 and 5
qwp 4               # QWP1
qwp 5               # QWP2
pbs 4 -> 4 11       # PBS1
pbs 5 -> 5 12       # PBS2
cavity 4 4
cavity 4 5
pbs 4 11 -> 4 11    # PBS3
pbs 5 12 -> 5 12    # PBS4
qwp 4               # QWP3
qwp 5               # QWP4
stage 3

# stage 4: bit flip of spin 3 on (4,H), (5,V) and path 6
spinh 3
pbs 4 -> 4 11       # PBS5
pbs 5 -> 5 12       # PBS6
x 12                # X1
cavity 3 4
cavity 3 12
cavity 3 6
pbs 4 11 -> 4 11    # PBS7
x 12                # X2
pz 12               # sigma_z on the reflected arm, before the merge
pbs 5 12 -> 5 12    # PBS8
spinh 3
stage 4

# stage 5: erase spin-4 which-polarization information and merge onto 7, 8
qwp 4               # QWP5
qwp 5               # QWP6
pbs 4 -> 4 11       # PBS9
pbs 5 -> 5 12       # PBS10
x 12                # X4
cavity 4 4
cavity 4 12
x 12                # X6
pbs 4 11 -> 4 11    # PBS11
pbs 5 12 -> 5 12    # PBS12
qwp 4               # QWP7
qwp 5               # QWP8
x 4                 # X7
x 5                 # X8
pbs 3 4 -> 7 4      # PBS13
pbs 6 5 -> 8 5      # PBS14
stage 5

# stage 6: erase path/polarization and detect
qwp 7               # QWP9
qwp 8               # QWP10
bs 7 8              # BS7
pbs 7 -> 7 9        # PBS15
pbs 8 -> 8 10       # PBS16
stage 6
detect 7 H D_H1
detect 8 H D_V1
detect 9 V D_H2
detect 10 V D_V2
"""


def builtin_gate_circuit() -> Circuit:
    """The six-stage gate circuit with stage markers 1-6."""
    return parse_circuit(BUILTIN_SOURCE)
