"""Command-line driver: demos, acceptance suites and circuit files.

Exit codes: 0 success, 1 a check failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import qcircuit, qfe, qmio, suite, ufe
from .config import get_config, using
from .errors import ParseError, QfeError, ShapeError
from .qcore import (DensityMatrix, PauliKey, RandomSource, apply_pauli, make_epr, qotp_average,
                    random_state, state, teleport, tensor, trace_distance)

SCHEMA_VERSION = 1
DEMOS = ("qotp", "teleport", "oneqfe", "polyqfe", "ufe", "qio")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    tol: float = 1e-9
    trials: int = 10_000
    max_qubits: int = 12
    out: Path | None = None


def _envelope(command: str, cfg: RunConfig, body: dict[str, Any]) -> dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "command": command, "seed": cfg.seed,
            "tol": cfg.tol, "max_qubits": cfg.max_qubits, **body}


def _emit(doc: dict[str, Any], out: Path | None) -> None:
    if out is not None:
        out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fidelity_pure(psi: DensityMatrix, rho: DensityMatrix) -> float:
    return float(np.real(np.trace(psi.data @ rho.data)))


# -------------------------------------------------------------------- demos

def _demo_qotp(rng: RandomSource) -> tuple[list[str], dict]:
    rho = random_state(1, rng)
    key = PauliKey.random(1, rng)
    avg = qotp_average(rho)
    d = trace_distance(avg, DensityMatrix.maximally_mixed(1))
    lines = [f"sample key (a, b) = ({key.a[0]}, {key.b[0]})",
             f"key-averaged state = {np.round(avg.data.real, 12).tolist()}",
             f"distance to I/2 = {d:.3g}"]
    return lines, {"distance_to_maximally_mixed": d, "averaged": np.round(avg.data.real, 12).tolist()}


def _demo_teleport(rng: RandomSource) -> tuple[list[str], dict]:
    psi = random_state(1, rng, rank=1)
    key, post = teleport(tensor(psi, make_epr(1)), [0], [1], rng)
    fixed = apply_pauli(post, key)
    f = _fidelity_pure(psi, fixed)
    lines = [f"correction key X^{key.a[0]} Z^{key.b[0]}", f"final fidelity {f:.12f}"]
    return lines, {"correction": {"a": key.a[0], "b": key.b[0]}, "fidelity": f}


def _demo_oneqfe(rng: RandomSource) -> tuple[list[str], dict]:
    c = qcircuit.circuit(1, [("H", [0])])
    keys = qfe.oneqfe_setup(c, rng)
    ct = qfe.oneqfe_enc(keys, state("0"), rng)
    out = qfe.oneqfe_dec(qfe.oneqfe_keygen(keys), ct)
    d = trace_distance(out, state("+"))
    return [f"decrypted H|0> with distance {d:.3g} to |+>"], {"distance": d}


def _demo_polyqfe(rng: RandomSource) -> tuple[list[str], dict]:
    cls = qcircuit.CircuitClass(1, 2)
    c = qcircuit.circuit(1, [("H", [0]), ("P", [0])])
    rho = random_state(1, rng)
    keys = qfe.polyqfe_setup(cls, rng)
    ct = qfe.polyqfe_enc(keys, rho, rng)
    out = qfe.polyqfe_dec(qfe.polyqfe_keygen(keys, c), ct, keys.universal)
    d = trace_distance(out, qcircuit.evaluate(c, rho))
    return [f"key for P.H decrypts with distance {d:.3g}",
            f"description length {cls.length} bits"], {"distance": d, "description_bits": cls.length}


def _demo_ufe(rng: RandomSource) -> tuple[list[str], dict]:
    c = qcircuit.circuit(1, [("H", [0])])
    rho = random_state(1, rng)
    mpk, msk = ufe.ufe_setup(1, rng)
    sk = ufe.ufe_keygen(msk, c, rng)
    d0 = trace_distance(ufe.ufe_dec(sk, ufe.ufe_enc(mpk, rho, rng)), qcircuit.evaluate(c, rho))
    ct, k0, _, b = ufe.enc_star(mpk, state("0"), state("1"), rng.bits(1)[0], rng)
    out = ufe.ufe_dec(ufe.ufe_keygen_with(msk, c, k0.a, k0.b), ct)
    d1 = trace_distance(out, qcircuit.evaluate(c, state(str(b))))
    return [f"honest ciphertext: distance {d0:.3g}", f"Enc* ciphertext (b={b}): distance {d1:.3g}",
            f"plaintext layout {mpk.layout.total} qubits"], {"mode0_distance": d0, "mode1_distance": d1, "b": b}


def _demo_qio(rng: RandomSource) -> tuple[list[str], dict]:
    c = qcircuit.circuit(1, [("H", [0])])
    prog = qmio.obf(c, rng)
    out = qmio.eval_program(prog, state("0"), rng)
    d = trace_distance(out, state("+"))
    return [f"Eval(Obf(H), |0>) distance {d:.3g} to |+>", f"program parts {prog.counts()}"], \
        {"distance": d, "counts": prog.counts()}


_DEMO_FNS = {"qotp": _demo_qotp, "teleport": _demo_teleport, "oneqfe": _demo_oneqfe,
             "polyqfe": _demo_polyqfe, "ufe": _demo_ufe, "qio": _demo_qio}


def cmd_demo(name: str, cfg: RunConfig) -> int:
    if name not in _DEMO_FNS:
        print(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}", file=sys.stderr)
        return EXIT_USAGE
    lines, body = _DEMO_FNS[name](RandomSource(cfg.seed))
    print(f"[{name}]")
    for line in lines:
        print("  " + line)
    _emit(_envelope("demo", cfg, {"demo": name, "results": body}), cfg.out)
    return EXIT_OK


# -------------------------------------------------------------------- suite

def cmd_suite(name: str, cfg: RunConfig) -> int:
    if name not in suite.SUITES + ("all",):
        print(f"unknown suite {name!r}", file=sys.stderr)
        return EXIT_USAGE
    results = suite.run_suite(name, suite.SuiteContext(cfg.seed, cfg.trials))
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        val = "-" if r.value is None else f"{r.value:.3g}"
        print(f"{mark} {r.suite}/{r.name} value={val} limit={r.limit} ({r.seconds:.2f}s) {r.detail}")
    summary = suite.summarize(results)
    print(f"{summary['passed']}/{summary['total']} checks passed in {summary['seconds']}s")
    if summary["failed"]:
        print("failing checks: " + ", ".join(summary["failed"]))
    out = cfg.out if cfg.out is not None else Path(f"qfekit-suite-{name}.json")
    _emit(_envelope("suite", cfg, {"suite": name, "summary": summary,
                                   "checks": [r.to_dict() for r in results]}), out)
    return EXIT_OK if not summary["failed"] else EXIT_FAIL


# ------------------------------------------------------------------ circuit

def _load_circuit(path: Path) -> qcircuit.CircuitDesc:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return qcircuit.circuit_from_json(text)


def cmd_circuit(action: str, path: Path, cfg: RunConfig, input_label: str | None = None,
                bits: str = "") -> int:
    try:
        desc = _load_circuit(path)
    except ParseError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if action == "validate":
        info = desc.to_json()
        print(f"{path}: valid ({info['quantum_inputs']} quantum, {info['classical_inputs']} classical "
              f"inputs, {len(info['gates'])} gates)")
        _emit(_envelope("circuit", cfg, {"action": "validate", "valid": True, "circuit": info}), cfg.out)
        return EXIT_OK
    label = input_label if input_label is not None else "0" * desc.n_quantum
    try:
        rho = state(label) if label else DensityMatrix.scalar()
        c_bits = tuple(int(ch) for ch in bits)
        if any(b not in (0, 1) for b in c_bits):
            raise ShapeError("classical bits must be 0 or 1")
        if rho.n != desc.n_quantum:
            raise ShapeError(f"input has {rho.n} qubits, circuit takes {desc.n_quantum}")
        out = qcircuit.evaluate(desc, rho, c_bits)
    except (QfeError, ValueError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    doc = _envelope("circuit", cfg, {"action": "eval", "input": label, "classical_bits": bits,
                                     "output": qcircuit.density_to_json(out)})
    print(json.dumps(doc, sort_keys=True))
    _emit(doc, cfg.out)
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _positive_int(lo: int, hi: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
        if not lo <= v <= hi:
            raise argparse.ArgumentTypeError(f"must be between {lo} and {hi}")
        return v
    return parse


def _tolerance(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("tolerance must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_positive_int(0, 2**63 - 1), default=0, help="RNG seed (default 0)")
    common.add_argument("--tol", type=_tolerance, default=1e-9, help="algebraic tolerance (default 1e-9)")
    common.add_argument("--trials", type=_positive_int(1, 10**7), default=10_000,
                        help="Monte-Carlo trials (default 10000)")
    common.add_argument("--max-qubits", type=_positive_int(1, 16), default=12,
                        help="largest dense state allowed (default 12)")
    common.add_argument("--out", type=Path, default=None, help="write the JSON report here")

    p = argparse.ArgumentParser(prog="qfekit", description="Exact simulation of quantum functional encryption.")
    sub = p.add_subparsers(dest="command", required=True)
    d = sub.add_parser("demo", parents=[common], help="run a protocol demo")
    d.add_argument("name", choices=DEMOS)
    s = sub.add_parser("suite", parents=[common], help="run acceptance checks")
    s.add_argument("name", choices=suite.SUITES + ("all",))
    c = sub.add_parser("circuit", parents=[common], help="validate or evaluate a circuit file")
    c.add_argument("action", choices=("validate", "eval"))
    c.add_argument("path", type=Path)
    c.add_argument("--input", dest="input_label", default=None,
                   help="input state label such as 0, 1, +, -, r, l per qubit (default all zeros)")
    c.add_argument("--bits", default="", help="classical input bits, e.g. 01")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # argparse reports usage errors with code 2
        return int(exc.code or 0)
    cfg = RunConfig(args.seed, args.tol, args.trials, args.max_qubits, args.out)
    run_cfg = dataclasses.replace(get_config().with_tol(cfg.tol), max_qubits=cfg.max_qubits)
    with using(run_cfg):
        if args.command == "demo":
            return cmd_demo(args.name, cfg)
        if args.command == "suite":
            return cmd_suite(args.name, cfg)
        return cmd_circuit(args.action, args.path, cfg, args.input_label, args.bits)


if __name__ == "__main__":
    sys.exit(main())
