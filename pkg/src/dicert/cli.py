"""Command-line interface: bound curves, certification, noise sweeps, checks.

Gate angles given with ``--phi`` use the convention in which CU_pi is the
controlled-NOT; they are passed to the library as the cu_phi angle phi/2
(``--formula-angle`` gives that angle directly).

Exit codes: 0 success, 2 infeasible or out-of-range input, 3 solver failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, _backend
from .bell import (Behavior, b_phi_assignment, b_phi_functional, b_phi_local_bound_closed_form,
                   chsh_assignment, chsh_functional, evaluate_on_behavior, local_bound, verify_candidate)
from .certify import certify_gate, certify_identity
from .noisesim import DEFAULT_GRID, is_monotone_non_increasing, sweep_gate, sweep_identity
from .quantum import gate_label_angle, phi_plus, xi_state
from .selftest import (BoundCurve, InfeasibleError, SearchBudget, SolverError, bound_curve, default_budget,
                       jordan_frame_target, smoke_budget)

EXIT_OK, EXIT_RANGE, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
DEFAULT_CACHE = ".dicert-cache"


def _fmt_angle(x: float) -> str:
    return f"{x:.10g}"


def _digest(obj: object) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=repr).encode()).hexdigest()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_json(path: Path, data: dict) -> None:
    _write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _resolve_formula_angle(args: argparse.Namespace, default_label: float | None = None) -> tuple[float, float]:
    """(gate_label, formula_angle) from --phi / --formula-angle."""
    if getattr(args, "formula_angle", None) is not None:
        return 2.0 * args.formula_angle, args.formula_angle
    label = args.phi if args.phi is not None else default_label
    if label is None:
        raise InfeasibleError("--phi (or --formula-angle) is required for this test")
    return label, gate_label_angle(label)


def _budget(args: argparse.Namespace, parties: int) -> tuple[SearchBudget, int]:
    if getattr(args, "smoke", False):
        return smoke_budget(), args.samples or 20
    budget = default_budget(parties)
    if getattr(args, "grid_step", None):
        budget = SearchBudget(grid_step=args.grid_step)
    return budget, args.samples or 60


def _problem(test: str, formula_angle: float | None):
    if test == "chsh":
        f = chsh_functional()
        target = jordan_frame_target(phi_plus(), chsh_assignment())
    else:
        f = b_phi_functional(formula_angle)
        target = jordan_frame_target(xi_state(formula_angle), b_phi_assignment(formula_angle))
    return f, target


def curve_key(f, target: np.ndarray, budget: SearchBudget, samples: int) -> dict:
    return {"functional": f.digest_items(), "target": hashlib.sha256(np.round(target, 12).tobytes()).hexdigest(),
            "grid": {"samples": samples, "kind": "default"}, "budget": budget.to_json(),
            "tolerances": {"golden": 1e-13, "gap": 1e-7}, "version": __version__}


def load_or_build_curve(test: str, formula_angle: float | None, budget: SearchBudget, samples: int,
                        cache: Path | None, log=None) -> tuple[BoundCurve, str, bool]:
    """Content-addressed curve cache.  Returns (curve, key digest, cache hit)."""
    f, target = _problem(test, formula_angle)
    key = _digest(curve_key(f, target, budget, samples))
    if cache is not None:
        csv_path, js_path = cache / f"{key}.csv", cache / f"{key}.json"
        if csv_path.exists() and js_path.exists():
            return BoundCurve.from_files(csv_path.read_text(), json.loads(js_path.read_text())), key, True
    curve = bound_curve(target, f, budget=budget, samples=samples, progress=log)
    curve.meta.update({"test": test, "formula_angle": formula_angle})
    if cache is not None:
        _write(cache / f"{key}.csv", curve.to_csv())
        _write_json(cache / f"{key}.json", curve.sidecar())
        # reload so that cached and fresh curves are bit-identical
        curve = BoundCurve.from_files((cache / f"{key}.csv").read_text(),
                                      json.loads((cache / f"{key}.json").read_text()))
    else:
        curve = BoundCurve.from_files(curve.to_csv(), json.loads(json.dumps(curve.sidecar())))
    return curve, key, False


def _header(config: dict) -> list[str]:
    return [f"dicert {__version__}", f"config_digest {_digest(config)}"]


def _cache_dir(args: argparse.Namespace) -> Path | None:
    return None if args.no_cache else Path(args.cache_dir).resolve()


def cmd_curve(args: argparse.Namespace) -> int:
    if args.test == "cuphi":
        label, fa = _resolve_formula_angle(args)
    else:
        label = fa = None
    f_parties = 2 if args.test == "chsh" else 4
    budget, samples = _budget(args, f_parties)
    out = Path(args.out).resolve()
    log = (lambda j, b, v: print(f"  sample {j}: beta'={b:.6f} overlap={v:.6f}", file=sys.stderr)) \
        if args.verbose else None
    try:
        curve, key, hit = load_or_build_curve(args.test, fa, budget, samples, _cache_dir(args), log)
    except SolverError as exc:
        _write_json(out / "diagnostics.json", {"error": str(exc), "mu_trace": exc.mu_trace})
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    name = "chsh" if args.test == "chsh" else f"cuphi_{_fmt_angle(label)}"
    config = {"command": "curve", "test": args.test, "gate_label": label, "formula_angle": fa,
              "budget": budget.to_json(), "samples": samples, "curve_key": key}
    _write(out / f"{name}.csv", curve.to_csv(_header(config)))
    side = curve.sidecar() | {"tool_version": __version__, "config_digest": _digest(config),
                              "gate_label": label, "formula_angle": fa, "test": args.test}
    _write_json(out / f"{name}.json", side)
    if "endpoint_not_one" in curve.flags:
        _write_json(out / "diagnostics.json", {"error": "envelope endpoint differs from 1", "flags": curve.flags})
        return EXIT_SOLVER
    print(f"threshold {curve.threshold:.10g}")
    return EXIT_OK


def _bell_from_behavior(path: str, f) -> float:
    return evaluate_on_behavior(f, Behavior.from_csv(path, f.parties))


def cmd_certify(args: argparse.Namespace) -> int:
    cache = _cache_dir(args)
    budget_c, samples_c = _budget(args, 2)
    curve_c = _load_curve_arg(args.chsh_curve) if args.chsh_curve else \
        load_or_build_curve("chsh", None, budget_c, samples_c, cache)[0]
    attested = args.attest_common_b
    if args.kind == "identity":
        bi = args.beta_i if args.beta_i is not None else _bell_from_behavior(args.behavior_in, chsh_functional())
        bo = args.beta_o if args.beta_o is not None else _bell_from_behavior(args.behavior_out, chsh_functional())
        report = certify_identity(_clip(bi, curve_c), _clip(bo, curve_c), curve_c, attested)
        config = {"command": "certify identity", "beta_i": bi, "beta_o": bo}
    else:
        label, fa = _resolve_formula_angle(args, default_label=math.pi)
        budget_g, samples_g = _budget(args, 4)
        curve_g = _load_curve_arg(args.gate_curve) if args.gate_curve else \
            load_or_build_curve("cuphi", fa, budget_g, samples_g, cache)[0]
        b1 = args.beta_i1 if args.beta_i1 is not None else _bell_from_behavior(args.behavior_in1, chsh_functional())
        b2 = args.beta_i2 if args.beta_i2 is not None else _bell_from_behavior(args.behavior_in2, chsh_functional())
        g = args.gamma_o if args.gamma_o is not None else _bell_from_behavior(args.behavior_out, b_phi_functional(fa))
        report = certify_gate(_clip(b1, curve_c), _clip(b2, curve_c), _clip(g, curve_g), curve_c, curve_g, attested)
        config = {"command": "certify gate", "beta_i1": b1, "beta_i2": b2, "gamma_o": g,
                  "gate_label": label, "formula_angle": fa}
    data = report.to_json() | {"tool_version": __version__, "config_digest": _digest(config), "config": config}
    if args.out:
        _write_json(Path(args.out).resolve(), data)
    print(json.dumps({"channel_fidelity_bound": report.channel_fidelity_bound, "trivial": report.trivial}))
    return EXIT_OK


def _clip(value: float, curve: BoundCurve) -> float:
    """Tolerate rounding of Bell values quoted at the maximum (e.g. 2.8284)."""
    if value > curve.max_bell + 1e-3:
        raise InfeasibleError(f"Bell value {value} exceeds the quantum maximum {curve.max_bell}")
    return min(value, curve.max_bell)


def _load_curve_arg(path: str) -> BoundCurve:
    p = Path(path).resolve()
    side = p.with_suffix(".json")
    return BoundCurve.from_files(p.read_text(), json.loads(side.read_text()))


def cmd_noise_sweep(args: argparse.Namespace) -> int:
    label, fa = _resolve_formula_angle(args, default_label=math.pi)
    cache = _cache_dir(args)
    budget_c, samples_c = _budget(args, 2)
    budget_g, samples_g = _budget(args, 4)
    curve_c = load_or_build_curve("chsh", None, budget_c, samples_c, cache)[0]
    curve_g = load_or_build_curve("cuphi", fa, budget_g, samples_g, cache)[0]
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(DEFAULT_GRID)
    out = Path(args.out).resolve()
    ident = sweep_identity(curve_c, grid, grid)
    panel = "cnot" if abs(label - math.pi) < 1e-9 else f"cuphi_{_fmt_angle(label)}"
    gate = sweep_gate(curve_c, curve_g, fa, grid, grid, panel)
    config = {"command": "noise-sweep", "gate_label": label, "formula_angle": fa, "grid": grid,
              "chsh_curve": curve_c.digest(), "gate_curve": curve_g.digest()}
    _write(out / "identity.csv", ident.to_csv(_header(config)))
    _write(out / f"{panel}.csv", gate.to_csv(_header(config)))
    mono = is_monotone_non_increasing(ident) and is_monotone_non_increasing(gate)
    print(json.dumps({"identity_rows": len(ident.rows), f"{panel}_rows": len(gate.rows), "monotone": mono}))
    return EXIT_OK


def cmd_verify_bell(args: argparse.Namespace) -> int:
    label, fa = _resolve_formula_angle(args)
    f = b_phi_functional(fa)
    m = b_phi_assignment(fa)
    if args.corrupt:
        obs = m.get(3, "X")
        m = m.replace(3, "X", -obs)
    report = verify_candidate(f, m, xi_state(fa), args.delta)
    lb = local_bound(f)
    closed = b_phi_local_bound_closed_form(fa)
    data = report.to_json() | {"gate_label": label, "formula_angle": fa, "local_bound": lb,
                               "local_bound_closed_form": closed, "local_bound_matches": abs(lb - closed) <= 1e-10,
                               "corrupted": bool(args.corrupt), "tool_version": __version__}
    if args.out:
        _write_json(Path(args.out).resolve(), data)
    print(json.dumps({"passed": report.passed, "failed_checks": report.failed_checks(),
                      "local_bound": lb}))
    return EXIT_OK if report.passed and data["local_bound_matches"] else EXIT_VERIFY


def cmd_selfcheck(args: argparse.Namespace) -> int:
    """Randomised invariant checks (inner-solver duality on random instances)."""
    from .selftest import min_overlap_given_bell
    from .linalg import random_hermitian
    rng = np.random.default_rng(args.seed)
    worst_gap = worst_feas = 0.0
    for _ in range(args.instances):
        d = int(rng.choice([4, 16]))
        M = random_hermitian(d, rng)
        B = random_hermitian(d, rng)
        w = np.linalg.eigvalsh(B)
        beta = float(rng.uniform(w[0], w[-1]))
        r = min_overlap_given_bell(M, B, beta)
        worst_gap = max(worst_gap, r.dual_gap)
        worst_feas = max(worst_feas, beta - r.constraint)
    ok = worst_gap <= 1e-7 and worst_feas <= 1e-9
    print(json.dumps({"seed": args.seed, "instances": args.instances, "max_dual_gap": worst_gap,
                      "max_constraint_violation": worst_feas, "passed": ok}))
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dicert", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dicert {__version__} ({_backend.BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--cache-dir", default=DEFAULT_CACHE, help="content-addressed curve cache")
        sp.add_argument("--no-cache", action="store_true")
        sp.add_argument("--smoke", action="store_true", help="reduced search: pi/10 grid, 20 samples")
        sp.add_argument("--samples", type=int, default=None, help="number of beta' samples")
        sp.add_argument("--grid-step", type=float, default=None, help="angle grid step (radians)")

    def angle(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--phi", type=float, default=None, help="gate angle in radians (pi = controlled-NOT)")
        sp.add_argument("--formula-angle", type=float, default=None,
                        help="angle of exp(-i phi X) in the controlled gate (= gate angle / 2)")

    c = sub.add_parser("curve", help="build a self-testing bound curve")
    c.add_argument("--test", choices=["chsh", "cuphi"], required=True)
    angle(c)
    common(c)
    c.add_argument("--out", default="curves")
    c.add_argument("--verbose", action="store_true")
    c.set_defaults(func=cmd_curve)

    cert = sub.add_parser("certify", help="certify a channel from Bell values or behaviours")
    cert.add_argument("kind", choices=["identity", "gate"])
    cert.add_argument("--beta-i", type=float)
    cert.add_argument("--beta-o", type=float)
    cert.add_argument("--beta-i1", type=float)
    cert.add_argument("--beta-i2", type=float)
    cert.add_argument("--gamma-o", type=float)
    cert.add_argument("--behavior-in")
    cert.add_argument("--behavior-out")
    cert.add_argument("--behavior-in1")
    cert.add_argument("--behavior-in2")
    cert.add_argument("--chsh-curve", help="curve CSV (with JSON sidecar next to it)")
    cert.add_argument("--gate-curve", help="curve CSV (with JSON sidecar next to it)")
    att = cert.add_mutually_exclusive_group()
    att.add_argument("--attest-common-b", dest="attest_common_b", action="store_true", default=None,
                     help="the same measurement devices were used on side B in all tests")
    att.add_argument("--no-attest-common-b", dest="attest_common_b", action="store_false")
    angle(cert)
    common(cert)
    cert.add_argument("--out", default=None)
    cert.set_defaults(func=cmd_certify)

    n = sub.add_parser("noise-sweep", help="white-noise robustness tables")
    angle(n)
    common(n)
    n.add_argument("--grid", default=None, help="comma-separated noise values for both axes")
    n.add_argument("--out", default="sweep")
    n.set_defaults(func=cmd_noise_sweep)

    v = sub.add_parser("verify-bell", help="necessary-condition checks for B_phi")
    angle(v)
    v.add_argument("--delta", type=float, default=0.01)
    v.add_argument("--corrupt", action="store_true", help="flip the sign of one observable (negative control)")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify_bell)

    s = sub.add_parser("selfcheck", help="randomised solver invariant checks")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=100)
    s.set_defaults(func=cmd_selfcheck)
    return p


def _validate(args: argparse.Namespace) -> None:
    if args.command == "certify":
        if args.kind == "identity":
            if (args.beta_i is None and not args.behavior_in) or (args.beta_o is None and not args.behavior_out):
                raise InfeasibleError("identity certification needs --beta-i/--behavior-in and --beta-o/--behavior-out")
        else:
            if (args.beta_i1 is None and not args.behavior_in1) or (args.beta_i2 is None and not args.behavior_in2) \
                    or (args.gamma_o is None and not args.behavior_out):
                raise InfeasibleError("gate certification needs two input Bell values and the output value")
    if args.command == "curve" and args.test == "chsh" and (args.phi is not None or args.formula_angle is not None):
        raise InfeasibleError("--phi applies only to --test cuphi")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        return int(args.func(args))
    except (InfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
