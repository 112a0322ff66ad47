"""Command-line front end.

Subcommands: generate, evolve, distance, refine-study, kernel-check,
diagnose.  Run configurations are JSON documents with a versioned
``schema`` field; unknown keys are rejected before any compute.  Exit
codes: 0 success, 1 input/config error, 2 certificate abort (partial
outputs are still written).

Thread count for the numerical backend comes from the VARMCF_THREADS
environment variable, overridden by ``--threads``; it must take effect
before the numerical modules load, which is why the engine imports here
live inside the handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import CertificateViolation, ConfigError, EngineError

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_CERTIFICATE_ABORT = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT_ERROR


def _check_keys(obj: dict, context: str, required: tuple = (), optional: tuple = ()) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{context}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"{context}: missing keys {sorted(missing)}")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: expected \"schema\": {SCHEMA_VERSION}")
    return doc


def _shape_from_dict(data: dict):
    from .ingest import ShapeSpec

    _check_keys(
        data,
        "input.shape",
        required=("kind", "samples"),
        optional=(
            "mass_mode",
            "radius",
            "minor_radius",
            "neck",
            "angle",
            "length",
            "intersection",
            "graph",
        ),
    )
    return ShapeSpec(**data)


def _varifold_from_input(data: dict):
    from .ingest import cloud_to_varifold, generate, load

    _check_keys(data, "input", optional=("shape", "file", "format", "d", "neighbors"))
    if ("shape" in data) == ("file" in data):
        raise ConfigError("input: provide exactly one of 'shape' or 'file'")
    if "shape" in data:
        return generate(_shape_from_dict(data["shape"]))
    cloud = load(data["file"], data.get("format"))
    return cloud_to_varifold(cloud, d=data.get("d"), k=int(data.get("neighbors", 8)))


def _quadrature_from_dict(data: dict):
    from .curvature import QuadratureSpec

    _check_keys(
        data,
        "quadrature",
        optional=("rule", "points_per_axis", "domain_radius_factor", "max_nodes"),
    )
    return QuadratureSpec(**data)


def _flow_config_from_dict(data: dict):
    from .curvature import QuadratureSpec
    from .flow import FlowConfig, Subdivision

    _check_keys(
        data,
        "flow",
        required=("eps",),
        optional=(
            "horizon",
            "steps",
            "dyadic_level",
            "times",
            "quadrature",
            "diffeo_safety",
            "step_mode",
            "strict_constant",
        ),
    )
    modes = [k for k in ("steps", "dyadic_level", "times") if k in data]
    if len(modes) != 1:
        raise ConfigError("flow: provide exactly one of 'steps', 'dyadic_level' or 'times'")
    horizon = float(data.get("horizon", 1.0))
    if "steps" in data:
        subdivision = Subdivision.uniform(int(data["steps"]), horizon)
    elif "dyadic_level" in data:
        subdivision = Subdivision.dyadic(int(data["dyadic_level"]), horizon)
    else:
        import numpy as np

        subdivision = Subdivision(np.asarray(data["times"], dtype=float))
    quadrature = (
        _quadrature_from_dict(data["quadrature"]) if "quadrature" in data else QuadratureSpec()
    )
    return FlowConfig(
        eps=float(data["eps"]),
        subdivision=subdivision,
        quadrature=quadrature,
        diffeo_safety=float(data.get("diffeo_safety", 0.5)),
        step_mode=str(data.get("step_mode", "practical")),
        strict_constant=float(data.get("strict_constant", 1.0)),
    )


def cmd_generate(args) -> int:
    from .ingest import ShapeSpec, generate, save_varifold_json

    spec_kwargs = {
        "kind": args.kind,
        "samples": args.samples,
        "mass_mode": args.mass_mode,
        "radius": args.radius,
        "minor_radius": args.minor_radius,
        "neck": args.neck,
        "angle": args.angle,
        "length": args.length,
        "intersection": args.intersection,
    }
    if args.graph is not None:
        spec_kwargs["graph"] = json.loads(args.graph)
    v = generate(ShapeSpec(**spec_kwargs))
    save_varifold_json(v, args.out)
    print(f"wrote {len(v)} atoms (mass {v.mass():.17g}) to {args.out}")
    return EXIT_OK


def cmd_evolve(args) -> int:
    config = _load_config(args.config)
    _check_keys(
        config,
        "config",
        required=("schema", "input", "flow", "outputs"),
        optional=("seed",),
    )
    _check_keys(
        config["outputs"], "outputs", required=("trajectory",), optional=("diagnostics", "csv")
    )
    seed = int(config.get("seed", 0))
    del seed  # reserved for randomized inputs; generators here are deterministic

    from .flow import evolve, write_atoms_csv, write_diagnostics_csv, write_trajectory_json

    v0 = _varifold_from_input(config["input"])
    flow_config = _flow_config_from_dict(config["flow"])
    traj = evolve(v0, flow_config)

    outputs = config["outputs"]
    write_trajectory_json(traj, outputs["trajectory"])
    if "diagnostics" in outputs:
        write_diagnostics_csv(traj, outputs["diagnostics"])
    if "csv" in outputs:
        write_atoms_csv(traj, outputs["csv"])
    if traj.failure is not None:
        print(
            f"aborted at step {traj.failure.step} (t = {traj.failure.time:.17g}): "
            f"{traj.failure.reason}",
            file=sys.stderr,
        )
        return EXIT_CERTIFICATE_ABORT
    print(f"completed {len(traj.diagnostics)} steps; final mass {traj.snapshots[-1].mass():.17g}")
    return EXIT_OK


def _load_varifold_file(path: str, d, neighbors: int):
    from .ingest import cloud_to_varifold, load

    cloud = load(path)
    return cloud_to_varifold(cloud, d=d, k=neighbors)


def cmd_distance(args) -> int:
    from .flow import _to_json
    from .metric import bl_distance_detail

    va = _load_varifold_file(args.file_a, args.d, args.neighbors)
    vb = _load_varifold_file(args.file_b, args.d, args.neighbors)
    if len(va) and len(vb):
        import numpy as np

        gap = float(
            np.min(
                np.linalg.norm(
                    va.positions[:, None, :] - vb.positions[None, :, :], axis=2
                )
            )
        )
        if gap > 2.0:
            print(
                "warning: supports are more than 2 apart; the distance saturates "
                "near its cap there",
                file=sys.stderr,
            )
    print(_to_json(bl_distance_detail(va, vb)))
    return EXIT_OK


def cmd_refine_study(args) -> int:
    config = _load_config(args.config)
    _check_keys(
        config,
        "config",
        required=("schema", "input", "eps", "levels"),
        optional=("seed", "horizon", "quadrature", "diffeo_safety"),
    )
    levels = config["levels"]
    if not (isinstance(levels, list) and len(levels) == 2):
        raise ConfigError("levels must be [first, last]")

    from .flow import refinement_study

    v0 = _varifold_from_input(config["input"])
    rows = refinement_study(
        v0,
        eps=float(config["eps"]),
        levels=range(int(levels[0]), int(levels[1]) + 1),
        spec=_quadrature_from_dict(config["quadrature"]) if "quadrature" in config else None,
        horizon=float(config.get("horizon", 1.0)),
        diffeo_safety=float(config.get("diffeo_safety", 0.5)),
    )
    print("level,distance,ratio")
    for row in rows:
        ratio = "" if row.ratio is None else format(row.ratio, ".17g")
        print(f"{row.level},{format(row.distance, '.17g')},{ratio}")
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    if not 0.0 < args.eps < 1.0:
        return _fail(f"eps must lie in (0, 1), got {args.eps}")
    if args.n < 1:
        return _fail(f"dimension must be >= 1, got {args.n}")

    import numpy as np

    from .flow import _to_json
    from .kernel import Kernel, kernel_bound_check

    rng = np.random.default_rng(args.seed)
    # uniform samples in the unit ball, where the bounds are nontrivial
    raw = rng.standard_normal((args.samples, args.n))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    radii = rng.random(args.samples) ** (1.0 / args.n)
    samples = raw * radii[:, None]
    report = kernel_bound_check(Kernel.create(args.n, args.eps), samples)
    print(_to_json(report))
    return EXIT_OK if report["ok"] else EXIT_CERTIFICATE_ABORT


def cmd_diagnose(args) -> int:
    from .flow import ConstantTest, _to_json, brakke_residual, read_trajectory_json

    traj = read_trajectory_json(args.trajectory)
    if len(traj.snapshots) < 2:
        return _fail("trajectory has no steps to diagnose")
    a, b = traj.times[0], traj.times[-1]
    taus = [t1 - t0 for t0, t1 in zip(traj.times, traj.times[1:])]
    budget = sum(tau * d.dissipation for tau, d in zip(taus, traj.diagnostics))
    mass0 = traj.snapshots[0].mass()
    mass1 = traj.snapshots[-1].mass()
    delta = max(taus)
    report = {
        "steps": len(traj.diagnostics),
        "horizon": b,
        "max_step": delta,
        "mass_initial": mass0,
        "mass_final": mass1,
        "dissipation_budget": budget,
        "budget_within_initial_mass": bool(budget <= mass0 + 5.0 * delta * b),
        "mass_decay_residual": abs(mass1 - mass0 + budget),
        "mass_bound_violations": sum(0 if d.mass_bound_ok else 1 for d in traj.diagnostics),
        "brakke_residual_constant": brakke_residual(traj, ConstantTest(), a, b),
    }
    print(_to_json(report))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varmcf",
        description="Regularized mean curvature flow for point-cloud varifolds.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap backend threads (default: VARMCF_THREADS or library default)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample an analytic shape to JSON")
    gen.add_argument("--kind", required=True)
    gen.add_argument("--samples", type=int, required=True)
    gen.add_argument("--mass-mode", dest="mass_mode", default="uniform-per-length")
    gen.add_argument("--radius", type=float, default=1.0)
    gen.add_argument("--minor-radius", dest="minor_radius", type=float, default=0.25)
    gen.add_argument("--neck", type=float, default=0.35)
    gen.add_argument("--angle", type=float, default=1.5707963267948966)
    gen.add_argument("--length", type=float, default=2.0)
    gen.add_argument("--intersection", default="double")
    gen.add_argument("--graph", default=None, help="JSON {vertices, edges} for custom-graph")
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_generate)

    ev = sub.add_parser("evolve", help="run a flow from a JSON config")
    ev.add_argument("config")
    ev.set_defaults(handler=cmd_evolve)

    dist = sub.add_parser("distance", help="bounded-Lipschitz distance between two files")
    dist.add_argument("file_a")
    dist.add_argument("file_b")
    dist.add_argument("--d", type=int, default=None, help="plane dimension when estimating")
    dist.add_argument("--neighbors", type=int, default=8)
    dist.set_defaults(handler=cmd_distance)

    ref = sub.add_parser("refine-study", help="dyadic refinement study from a JSON config")
    ref.add_argument("config")
    ref.set_defaults(handler=cmd_refine_study)

    ker = sub.add_parser("kernel-check", help="verify kernel derivative bounds")
    ker.add_argument("--n", type=int, required=True)
    ker.add_argument("--eps", type=float, required=True)
    ker.add_argument("--samples", type=int, default=10_000)
    ker.add_argument("--seed", type=int, default=0)
    ker.set_defaults(handler=cmd_kernel_check)

    diag = sub.add_parser("diagnose", help="recompute diagnostics from a saved trajectory")
    diag.add_argument("trajectory")
    diag.set_defaults(handler=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    threads = args.threads if args.threads is not None else os.environ.get("VARMCF_THREADS")
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))
    try:
        return args.handler(args)
    except CertificateViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE_ABORT
    except (EngineError, ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
