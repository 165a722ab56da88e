"""Command-line entry point: ``sivcnot {verify,truth-table,simulate,sweep,reflection}``.

Exit codes: 0 success, 1 verification or physics failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .cavity import (
    CavityParams,
    PhysicalParams,
    SingularParametersError,
    cooperativity,
    reflection_coefficient,
    reflection_steady_state_oracle,
)
from .circuit import Circuit, NetlistError, builtin_gate_circuit, parse_circuit, validate
from .metrics import calibrate, conversion_matrix, gate_metrics, ideal_cnot44, sweep, sweep_csv
from .optics import CircuitValidityError
from .protocol import (
    CHECKPOINT_TOL,
    DETECTORS,
    N_STAGES,
    branch_spin_state,
    feed_forward,
    gate_action,
    run_protocol,
)
from .state import config_index, state_distance

log = logging.getLogger("sivcnot")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

GHZ = 2 * math.pi * 1e9


class UsageError(Exception):
    pass


def _load_circuit(path: str | None) -> Circuit:
    if path is None:
        return builtin_gate_circuit()
    try:
        source = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read circuit file: {exc}") from None
    circuit = parse_circuit(source)
    for d in validate(circuit):
        log.warning("%s", d)
    return circuit


def _parse_amplitudes(text: str, name: str) -> np.ndarray:
    """Comma-separated complex numbers in printed order (|3> first); renormalized if needed."""
    try:
        vals = np.array([complex(tok.strip().replace(" ", "")) for tok in text.split(",")], dtype=complex)
    except ValueError:
        raise UsageError(f"--{name}: cannot parse {text!r} as complex amplitudes") from None
    if vals.shape != (4,):
        raise UsageError(f"--{name}: expected 4 amplitudes, got {vals.size}")
    norm = float(np.sum(np.abs(vals) ** 2))
    if norm == 0:
        raise UsageError(f"--{name}: amplitudes are all zero")
    if abs(norm - 1) > 1e-6:
        log.warning("--%s amplitudes have squared norm %.6g; renormalizing", name, norm)
    return vals / math.sqrt(norm)


def _check_r(r: float, flag: str = "--r") -> float:
    if not 0.0 <= r <= 1.0:
        raise UsageError(f"{flag} must lie in [0, 1], got {r}")
    return r


def _complex_pair(z: complex) -> list[float]:
    return [z.real, z.imag]


def cmd_verify(args: argparse.Namespace) -> int:
    circuit = _load_circuit(args.circuit)
    if args.r is not None and _check_r(args.r) != 1.0:
        print(f"r = {args.r}: checkpoints are defined for ideal reflection only; printing metrics")
        m = gate_metrics(circuit, CavityParams.symmetric(args.r))
        print(f"efficiency      {m.efficiency:.6f}  ({m.definitions['efficiency']})")
        print(f"fidelity        {m.fidelity:.6f}  ({m.definitions['fidelity']})")
        print(f"min_conversion  {m.min_conversion:.6f}  ({m.definitions['min_conversion']})")
        return EXIT_OK

    rng = np.random.default_rng(args.seed)
    worst = np.zeros(N_STAGES + 1)
    ff_worst = 0.0
    for _ in range(args.draws):
        a = rng.normal(size=4) + 1j * rng.normal(size=4)
        g = rng.normal(size=4) + 1j * rng.normal(size=4)
        a, g = a / np.linalg.norm(a), g / np.linalg.norm(g)
        try:
            res = run_protocol(circuit, CavityParams.ideal(), a, g, checkpoints=True)
        except (CircuitValidityError, KeyError, ValueError) as exc:
            print(f"circuit failed to run: {exc}")
            return EXIT_FAIL
        seen = {cp.stage: cp.distance for cp in res.checkpoints}
        for s in range(N_STAGES + 1):
            worst[s] = max(worst[s], seen.get(s, math.inf))
        target = branch_spin_state("D_H1", a, g)
        for det in DETECTORS:
            ff_worst = max(ff_worst, state_distance(feed_forward(det, branch_spin_state(det, a, g)), target))
            if det in circuit.detectors:
                ff_worst = max(ff_worst, state_distance(res.branch(det).corrected_normalized, target))

    passed = 0
    for s in range(N_STAGES + 1):
        ok = worst[s] < CHECKPOINT_TOL
        passed += ok
        print(f"stage {s}: max distance {worst[s]:.3e}  {'PASS' if ok else 'FAIL'}")
    ff_ok = ff_worst < CHECKPOINT_TOL
    print(f"feed-forward: max distance {ff_worst:.3e}  {'PASS' if ff_ok else 'FAIL'}")
    print(f"{passed}/{N_STAGES + 1} checkpoints pass")
    return EXIT_OK if passed == N_STAGES + 1 and ff_ok else EXIT_FAIL


def cmd_truth_table(args: argparse.Namespace) -> int:
    r = _check_r(args.r)
    circuit = _load_circuit(args.circuit)
    m = conversion_matrix(gate_action(circuit, CavityParams.symmetric(r)))
    rows = []
    for c in range(4):
        for t in range(4):
            oc, ot = ideal_cnot44(c, t)
            rows.append((c, t, oc, ot, float(m[config_index(c, t), config_index(oc, ot)])))
    if args.json:
        json.dump(
            {
                "r": r,
                "convention": "loss-inclusive",
                "matrix": m.tolist(),
                "rows": [{"input": [c, t], "ideal": [oc, ot], "probability": p} for c, t, oc, ot, p in rows],
                "min_conversion": min(p for *_, p in rows),
            },
            sys.stdout,
            indent=2,
        )
        print()
        return EXIT_OK
    print("input    ideal    probability")
    for c, t, oc, ot, p in rows:
        print(f"|{c},{t}>    |{oc},{ot}>    {p:.4f}")
    print(f"minimum  {min(p for *_, p in rows):.4f}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    circuit = _load_circuit(args.circuit)
    alpha = _parse_amplitudes(args.control, "control")
    gamma = _parse_amplitudes(args.target, "target")
    params = CavityParams(override=(complex(args.r_down), complex(args.r_up)))
    try:
        res = run_protocol(circuit, params, alpha, gamma)
    except CircuitValidityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    report = res.to_dict()
    report["params"] = {"r_down": _complex_pair(complex(args.r_down)), "r_up": _complex_pair(complex(args.r_up))}
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if not 0 <= args.r_min <= args.r_max <= 1:
        raise UsageError(f"need 0 <= r-min <= r-max <= 1, got {args.r_min}, {args.r_max}")
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    grid = [args.r_min] if args.steps == 1 else list(np.linspace(args.r_min, args.r_max, args.steps))
    circuit = _load_circuit(args.circuit)
    text = sweep_csv(sweep(grid, circuit))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.metadata:
        Path(args.metadata).write_text(json.dumps(calibrate().to_dict(), indent=2) + "\n")
    return EXIT_OK


def _fmt(z: complex) -> str:
    return f"{z.real:+.6f}{z.imag:+.6f}j  |r|={abs(z):.6f}  arg={math.atan2(z.imag, z.real):+.6f}"


def cmd_reflection(args: argparse.Namespace) -> int:
    physical = args.g is not None or args.kappa is not None or args.gamma is not None
    if physical:
        if None in (args.g, args.kappa, args.gamma):
            raise UsageError("physical mode needs --g, --kappa and --gamma")
        if any(f is not None for f in (args.C, args.delta_up, args.delta_down, args.delta_c)):
            raise UsageError("give either dimensionless or physical parameters, not both")
        k = GHZ if args.two_pi_ghz else 1.0
        pp = PhysicalParams(
            g=args.g * k,
            kappa=args.kappa * k,
            gamma=args.gamma * k,
            omega=args.omega * k,
            omega_c=args.omega_c * k,
            omega_down=args.omega_down * k,
            omega_up=args.omega_up * k,
        )
        cp = pp.to_cavity_params()
    else:
        cp = CavityParams(
            C=args.C if args.C is not None else 0.0,
            delta_down=args.delta_down or 0.0,
            delta_up=args.delta_up or 0.0,
            delta_c=args.delta_c or 0.0,
        )
        # any rates reproduce the same dimensionless point
        pp = PhysicalParams(
            g=math.sqrt(cp.C),
            kappa=2.0,
            gamma=2.0,
            omega_c=cp.delta_c,
            omega_down=cp.delta_down,
            omega_up=cp.delta_up,
        )
    print(f"C = {cp.C:.6f}  delta_down = {cp.delta_down:.6f}  delta_up = {cp.delta_up:.6f}  delta_c = {cp.delta_c:.6f}")
    if physical:
        print(f"cooperativity 4g^2/(kappa gamma) = {cooperativity(pp):.4f}")
    for spin in ("down", "up"):
        r_formula = reflection_coefficient(cp, spin)
        r_oracle = reflection_steady_state_oracle(pp, spin)
        print(f"r_{spin:<4} formula {_fmt(r_formula)}")
        print(f"r_{spin:<4} oracle  {_fmt(r_oracle)}  diff={abs(r_formula - r_oracle):.2e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sivcnot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def circuit_flag(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--circuit", help="netlist file (default: built-in gate circuit)")

    sp = sub.add_parser("verify", help="check the staged evolution and feed-forward at ideal reflection")
    circuit_flag(sp)
    sp.add_argument("--r", type=float, default=None, help="|r| with r_down = -r_up; != 1 prints metrics instead")
    sp.add_argument("--draws", type=int, default=100, help="random control/target inputs (default 100)")
    sp.add_argument("--seed", type=int, default=7, help="seed for the random inputs (default 7)")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("truth-table", help="correct-output probability for all 16 basis inputs")
    circuit_flag(sp)
    sp.add_argument("--r", type=float, default=1.0, help="|r| with r_down = -r_up (default 1)")
    sp.add_argument("--json", action="store_true", help="emit the full 16x16 matrix as JSON")
    sp.set_defaults(func=cmd_truth_table)

    sp = sub.add_parser(
        "simulate",
        help="run one input through the protocol and write a JSON report",
        description="Amplitudes are comma-separated complex numbers ordered |3>,|2>,|1>,|0> "
        "(e.g. --control 0,1,0,0 is |2>_c).",
    )
    circuit_flag(sp)
    sp.add_argument("--r-down", type=complex, default=1.0, help="reflection for spin down (default 1)")
    sp.add_argument("--r-up", type=complex, default=-1.0, help="reflection for spin up (default -1)")
    sp.add_argument("--control", default="0.5,0.5,0.5,0.5", help="control amplitudes a1..a4 for |3>..|0>")
    sp.add_argument("--target", default="0.5,0.5,0.5,0.5", help="target amplitudes g1..g4 for |3>..|0>")
    sp.add_argument("--out", help="output JSON path (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="efficiency/fidelity/min-conversion versus |r| as CSV")
    circuit_flag(sp)
    sp.add_argument("--r-min", type=float, default=0.9)
    sp.add_argument("--r-max", type=float, default=1.0)
    sp.add_argument("--steps", type=int, default=11)
    sp.add_argument("--out", help="output CSV path (default stdout)")
    sp.add_argument("--metadata", help="also write the calibration report (JSON) here")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("reflection", help="cavity reflection: closed form and steady-state solve")
    sp.add_argument("--C", type=float, help="cooperativity")
    sp.add_argument("--delta-down", type=float, help="dimensionless detuning of the down transition")
    sp.add_argument("--delta-up", type=float, help="dimensionless detuning of the up transition")
    sp.add_argument("--delta-c", type=float, help="dimensionless cavity detuning")
    sp.add_argument("--g", type=float, help="coupling rate")
    sp.add_argument("--kappa", type=float, help="cavity decay rate")
    sp.add_argument("--gamma", type=float, help="dipole decay rate")
    sp.add_argument("--omega", type=float, default=0.0, help="photon frequency")
    sp.add_argument("--omega-c", type=float, default=0.0, help="cavity frequency")
    sp.add_argument("--omega-down", type=float, default=0.0, help="down transition frequency")
    sp.add_argument("--omega-up", type=float, default=0.0, help="up transition frequency")
    sp.add_argument("--two-pi-ghz", action="store_true", help="physical values are in units of 2*pi GHz")
    sp.set_defaults(func=cmd_reflection)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except NetlistError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularParametersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
