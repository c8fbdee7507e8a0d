"""Command-line surface: reproducible experiments from JSON configs.

Exit codes follow a CI-friendly contract: 0 for pass, 1 for a failed check
or verdict, 2 for usage and configuration errors.  All randomness derives
from the single config-level seed through named substreams, so adding a
command never perturbs another command's draws.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import check_assumptions, compute_ledger
from .critical import (
    AssumptionError,
    construct_critical_point,
    enumerate_sigma_profiles,
    optimal_profile,
    profile_from_choices,
    sample_random_params,
    solve_scalar_equation,
    zero_profile,
)
from .network import DimChain, RegParams
from .spectrum import analyze_target
from .training import (
    ModelSpec,
    TrainConfig,
    estimate_linear_rate,
    InsufficientDataError,
    reproduce_section4,
    section4_rows_to_csv,
    train,
)
from .util import named_seed, named_stream
from .verify import (
    RadiusSweepConfig,
    fit_counterexample_scaling,
    verify_error_bound,
    verify_pl_qg,
)

OUTPUT_DIR_ENV = "DEEPLINEAR_OUT"


class ConfigError(ValueError):
    pass


def _check_keys(block: dict, allowed: set[str], context: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")


def _require(block: dict, key: str, context: str):
    if key not in block:
        raise ConfigError(f"missing key {key!r} in {context}")
    return block[key]


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(
        cfg,
        {"seed", "output_dir", "instance", "sweep", "train", "model",
         "depths", "constants", "rate_fit"},
        "config",
    )
    return cfg


@dataclass
class Instance:
    dims: DimChain
    reg: RegParams
    target: np.ndarray

    def spectrum(self, grouping_tol: float = 1e-8):
        return analyze_target(self.target, grouping_tol)


def build_instance(cfg: dict, seed: int) -> Instance:
    block = _require(cfg, "instance", "config")
    _check_keys(
        block,
        {"dims", "lambdas", "lambda_uniform", "target", "grouping_tol"},
        "instance",
    )
    dims = DimChain(tuple(int(d) for d in _require(block, "dims", "instance")))
    depth = dims.depth
    if "lambdas" in block and "lambda_uniform" in block:
        raise ConfigError("give either 'lambdas' or 'lambda_uniform', not both")
    if "lambdas" in block:
        lams = tuple(float(x) for x in block["lambdas"])
        if len(lams) != depth:
            raise ConfigError(f"need {depth} lambdas, got {len(lams)}")
        reg = RegParams(lams)
    elif "lambda_uniform" in block:
        reg = RegParams.uniform(float(block["lambda_uniform"]), depth)
    else:
        raise ConfigError("instance needs 'lambdas' or 'lambda_uniform'")

    tblock = _require(block, "target", "instance")
    _check_keys(tblock, {"kind", "scale", "values", "path", "seed"}, "instance.target")
    kind = _require(tblock, "kind", "instance.target")
    if kind == "gaussian":
        rng = named_stream(int(tblock.get("seed", seed)), "instance")
        target = rng.standard_normal((dims.d_out, dims.d_in))
        target *= float(tblock.get("scale", 1.0))
    elif kind == "diagonal":
        values = [float(v) for v in _require(tblock, "values", "instance.target")]
        target = np.zeros((dims.d_out, dims.d_in))
        for i, v in enumerate(values):
            target[i, i] = v
    elif kind == "file":
        path = Path(_require(tblock, "path", "instance.target"))
        if not path.exists():
            raise ConfigError(f"target file not found: {path}")
        target = np.load(path) if path.suffix == ".npy" else np.loadtxt(path)
        target = np.atleast_2d(np.asarray(target, dtype=float))
        if target.shape != (dims.d_out, dims.d_in):
            raise ConfigError(
                f"target file has shape {target.shape}, dims need "
                f"({dims.d_out}, {dims.d_in})"
            )
    else:
        raise ConfigError(f"unknown target kind {kind!r}")
    return Instance(dims, reg, target)


def _output_dir(cfg: dict) -> Path:
    out = os.environ.get(OUTPUT_DIR_ENV) or cfg.get("output_dir", "deeplinear-out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def dump_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _sweep_config(cfg: dict, seed: int) -> tuple[RadiusSweepConfig, str, str]:
    block = cfg.get("sweep", {})
    _check_keys(
        block,
        {"radii", "samples_per_radius", "mode", "center", "target", "seed"},
        "sweep",
    )
    radii = block.get("radii")
    if isinstance(radii, dict):
        _check_keys(radii, {"start", "stop", "num"}, "sweep.radii")
        radii = tuple(
            float(r)
            for r in np.geomspace(
                float(radii["start"]), float(radii["stop"]), int(radii["num"])
            )
        )
    elif radii is not None:
        radii = tuple(float(r) for r in radii)
    kwargs = {}
    if radii is not None:
        kwargs["radii"] = radii
    if "samples_per_radius" in block:
        kwargs["samples_per_radius"] = int(block["samples_per_radius"])
    if "mode" in block:
        kwargs["mode"] = str(block["mode"])
    kwargs["seed"] = int(block.get("seed", named_seed(seed, "sweep")))
    try:
        sweep = RadiusSweepConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return sweep, str(block.get("center", "optimal")), str(block.get("target", "F"))


def _resolve_center(inst: Instance, center_spec: str, seed: int, target: str):
    spectrum = inst.spectrum()
    depth = inst.dims.depth
    if center_spec == "zero":
        profile = zero_profile(spectrum, inst.reg, depth)
    elif center_spec == "optimal":
        profile = optimal_profile(spectrum, inst.reg, depth)
    elif center_spec == "saddle":
        choices = [-1] * spectrum.rank
        if spectrum.rank:
            choices[-1] = 0
        profile = profile_from_choices(spectrum, inst.reg, depth, choices)
    else:
        enum = enumerate_sigma_profiles(spectrum, inst.reg, depth)
        try:
            profile = enum.profiles[int(center_spec)]
        except (ValueError, IndexError) as exc:
            raise ConfigError(
                f"sweep.center must be 'zero', 'optimal', 'saddle', or a valid "
                f"profile index; got {center_spec!r}"
            ) from exc
    params = sample_random_params(
        inst.dims, spectrum, seed=named_seed(seed, "center-params")
    )
    point = construct_critical_point(
        profile, params, spectrum, inst.reg, depth, target=target, dims=inst.dims
    )
    return spectrum, point


def cmd_roots(args) -> int:
    roots = solve_scalar_equation(args.y, getattr(args, "lam"), args.L)
    lam, y, L = getattr(args, "lam"), args.y, args.L
    rows = []
    for r, deg, res in zip(roots.roots, roots.degenerate, roots.residuals):
        rows.append({"root": r, "residual": res, "degenerate": deg})
    if args.json:
        print(json.dumps({"y": y, "lambda": lam, "L": L, "roots": rows},
                         indent=2, sort_keys=True))
    else:
        print(f"roots of x^{2 * L - 1} - sqrt({lam})*{y}*x^{L - 1} + {lam}*x = 0, x >= 0")
        print(f"{'root':>22}  {'residual':>12}  degenerate")
        for row in rows:
            print(f"{row['root']:>22.16g}  {row['residual']:>12.3e}  {row['degenerate']}")
    return 0


def cmd_check_assumptions(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg.get("seed", 0))
    inst = build_instance(cfg, seed)
    report = check_assumptions(inst.dims, inst.spectrum(), inst.reg)
    payload = report.to_dict()
    out = _output_dir(cfg)
    dump_json(payload, out / "assumptions.json")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0 if report.ok else 1


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg.get("seed", 0))
    inst = build_instance(cfg, seed)
    spectrum = inst.spectrum()
    depth = inst.dims.depth
    enum = enumerate_sigma_profiles(spectrum, inst.reg, depth)
    if args.profile is None:
        profile = optimal_profile(spectrum, inst.reg, depth)
    else:
        if not 0 <= args.profile < len(enum.profiles):
            print(
                f"profile index {args.profile} out of range "
                f"(0..{len(enum.profiles) - 1})",
                file=sys.stderr,
            )
            return 2
        profile = enum.profiles[args.profile]
    try:
        ledger = compute_ledger(
            spectrum, inst.reg, depth, profile, inst.dims, all_profiles=enum
        )
    except AssumptionError as exc:
        print(f"constants: refused: {exc}", file=sys.stderr)
        return 1
    out = _output_dir(cfg)
    (out / "constants.csv").write_text(
        ledger.csv_header() + "\n" + ledger.csv_row() + "\n"
    )
    dump_json(ledger.to_dict(), out / "constants.json")
    print(ledger.to_json())
    return 0


def _finish_report(report, out: Path, name: str) -> int:
    (out / f"{name}.csv").write_text(report.to_csv())
    dump_json(report.to_dict(), out / f"{name}.json")
    fitted = ", ".join(
        f"{k}={v:.4g}" for k, v in sorted(report.fitted.items())
        if isinstance(v, (int, float)) and math.isfinite(v)
    )
    tags = f" [{','.join(report.tags)}]" if report.tags else ""
    print(f"{name}: {report.verdict}{tags} ({fitted}) -> {out / (name + '.json')}")
    return 0 if report.passed else 1


def cmd_verify_eb(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg.get("seed", 0))
    inst = build_instance(cfg, seed)
    sweep, center_spec, target = _sweep_config(cfg, seed)
    spectrum, point = _resolve_center(inst, center_spec, seed, target)
    report = verify_error_bound(point, spectrum, inst.reg, sweep, target=target)
    return _finish_report(report, _output_dir(cfg), "verify-eb")


def cmd_verify_plqg(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg.get("seed", 0))
    inst = build_instance(cfg, seed)
    sweep, center_spec, target = _sweep_config(cfg, seed)
    spectrum, point = _resolve_center(inst, center_spec, seed, target)
    report = verify_pl_qg(point, spectrum, inst.reg, sweep, target=target)
    return _finish_report(report, _output_dir(cfg), "verify-plqg")


def cmd_counterexample(args) -> int:
    kind = {"l2": "l2-lambda-eq-y2", "lge3": "lge3-phi-prime-zero"}[args.kind]
    out = Path(os.environ.get(OUTPUT_DIR_ENV, "deeplinear-out"))
    out.mkdir(parents=True, exist_ok=True)
    if args.fit:
        report = fit_counterexample_scaling(kind, y=args.y)
        code = _finish_report(report, out, f"counterexample-{args.kind}")
        return code
    from .verify import counterexample_family

    family = counterexample_family(kind, y=args.y)
    t = args.t
    print(
        f"counterexample {args.kind}: t={t!r} grad_norm={family.grad_norm(t)!r} "
        f"predicted={family.predicted_grad_norm(t)!r} dist={family.dist_upper(t)!r}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = int(cfg.get("seed", 0))
    inst = build_instance(cfg, seed)

    mblock = cfg.get("model", {})
    _check_keys(mblock, {"kind", "activation", "input"}, "model")
    input_matrix = None
    iblock = mblock.get("input")
    if iblock:
        _check_keys(iblock, {"kind", "cols", "seed"}, "model.input")
        ikind = _require(iblock, "kind", "model.input")
        if ikind == "uniform":
            cols = int(iblock.get("cols", inst.dims.d_in))
            rng = named_stream(int(iblock.get("seed", seed)), "input")
            bound = math.sqrt(6.0 / (inst.dims.d_in + cols))
            input_matrix = rng.uniform(-bound, bound, size=(inst.dims.d_in, cols))
        elif ikind != "identity":
            raise ConfigError(f"unknown input kind {ikind!r}")
    try:
        model = ModelSpec(
            kind=mblock.get("kind", "linear"),
            activation=mblock.get("activation", "identity"),
            input_matrix=input_matrix,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    tblock = cfg.get("train", {})
    _check_keys(
        tblock,
        {"learning_rate", "max_iters", "grad_sq_tol", "fval_change_tol",
         "init", "init_scale", "log_stride", "center"},
        "train",
    )
    kwargs = {k: tblock[k] for k in tblock if k != "center"}
    kwargs.setdefault("seed", named_seed(seed, "init"))
    try:
        tcfg = TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    center = None
    if tcfg.init == "near-critical":
        _, point = _resolve_center(inst, str(tblock.get("center", "optimal")), seed, "F")
        center = point.stack
    if model.input_matrix is not None and inst.target.shape[1] != model.input_matrix.shape[1]:
        # regenerate a target matching the sample count for general inputs
        rng = named_stream(seed, "instance-target")
        target = rng.standard_normal((inst.dims.d_out, model.input_matrix.shape[1]))
    else:
        target = inst.target

    traj = train(model, target, inst.reg, tcfg, inst.dims, center=center)
    out = _output_dir(cfg)
    (out / "trajectory.csv").write_text(traj.to_csv())
    summary = traj.summary()
    try:
        fit = estimate_linear_rate(traj)
        summary["rate"] = fit.rate
        summary["rate_r_squared"] = fit.r_squared
    except InsufficientDataError:
        summary["rate"] = None
        summary["rate_r_squared"] = None
    dump_json(summary, out / "train-summary.json")
    print(
        f"train: {traj.termination} after {traj.n_steps} steps, "
        f"F={traj.f_values[-1]:.6e} -> {out / 'train-summary.json'}"
    )
    return 0


def cmd_reproduce_s4(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = {}
    seed = int(cfg.get("seed", 0))
    depths = cfg.get("depths", (2, 4, 6))
    if args.depths:
        depths = tuple(int(d) for d in args.depths.split(","))
    rows = reproduce_section4(depths=depths, seed=seed)
    out = _output_dir(cfg)
    (out / "section4.csv").write_text(section4_rows_to_csv(rows))
    dump_json({"rows": [r.to_dict() for r in rows]}, out / "section4.json")
    for r in rows:
        print(
            f"L={r.depth} init={r.init_kind}: F(center)={r.f_center:.6e} "
            f"F(end)={r.f_end:.6e} rate={r.rate:.6f} R2={r.r_squared:.4f} "
            f"({r.termination}, {r.n_steps} steps)"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deeplinear",
        description="critical points, error-bound constants, and descent "
        "experiments for regularized deep linear networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roots", help="solve the scalar stationarity equation")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("check-assumptions", help="width and non-degeneracy gate")
    p.add_argument("config")
    p.set_defaults(func=cmd_check_assumptions)

    p = sub.add_parser("constants", help="error-bound constant ledger")
    p.add_argument("config")
    p.add_argument("--profile", type=int, default=None)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("verify-eb", help="error-bound radius sweep")
    p.add_argument("config")
    p.set_defaults(func=cmd_verify_eb)

    p = sub.add_parser("verify-plqg", help="gradient-dominance/quadratic-growth sweep")
    p.add_argument("config")
    p.set_defaults(func=cmd_verify_plqg)

    p = sub.add_parser("counterexample", help="degenerate-instance scaling family")
    p.add_argument("--kind", choices=("l2", "lge3"), required=True)
    p.add_argument("--y", type=float, default=2.0)
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--fit", action="store_true")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("train", help="gradient descent run")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reproduce-s4", help="near-critical initialization table")
    p.add_argument("config", nargs="?", default=None)
    p.add_argument("--depths", default=None)
    p.set_defaults(func=cmd_reproduce_s4)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
