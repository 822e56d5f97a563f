"""Command line front end for the spacetime pipeline.

Subcommands wire the library stages together:

    validate  admissibility report for a representation file
    build     certified polyhedral spacetime bundle from rep + triangulation
    surgery   spacelike cap certificates (complete or compact) over a bundle
    causal    randomized causal-curve report on a bundle
    mesh      leaf meshes (OBJ or JSON) sampled from a bundle
    demo      full pipeline on a builtin example, with a summary table

Reports are JSON on stdout (scripts first); --out writes the primary artifact.
Every report embeds the effective config and seed so a run can be replayed.
Exit codes: 0 success, 1 mathematical failure (a certificate or verdict did
not hold), 2 input error (unparseable or out-of-range input).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .builder import (
    BuildSettings,
    PolyhedralSpacetime,
    build,
    export_mesh,
    mesh_data,
)
from .minkowski import GeometryError
from .models import TWO_PI
from .causality import cauchy_time_report
from .representations import (
    AffineRepresentation,
    IdealTriangulationData,
    builtin_examples,
    check_admissible,
)
from .serialize import canonical_dumps, read_json
from .surgery import (
    BoundaryProfile,
    completeness_certificate,
    delta,
    divergence_check,
    extend_compact,
    extend_complete,
    fits_spear,
    induced_metric,
)


@dataclass
class RunConfig:
    """Flat run configuration; every key below is valid in a --config file.

    Tolerances and margins must be positive; seeds are recorded in every
    report this tool emits.
    """

    # builder certification
    margin: float = 1e-6
    max_doublings: int = 40
    t_min: float = 0.1
    t_max: float = 10.0
    t_count: int = 12
    bary_n: int = 32
    equiv_t_count: int = 10
    equiv_edge_count: int = 10
    equiv_tol: float = 1e-8
    fan_tol: float = 1e-8
    spear_max_shrinks: int = 25
    spear_r_samples: int = 10
    spear_theta_samples: int = 16
    with_spears: bool = True
    # admissibility gate
    admissibility_tol: float = 1e-9
    # causal tracing
    n_curves: int = 100
    t_start: float = 0.2
    t_stop: float = 4.0
    leaves: tuple[float, ...] = (0.5, 1.0, 2.0)
    # surgery certification sampling
    surgery_samples: int = 10_000
    surgery_margin: float = 1e-6
    # mesh export
    resolution: int = 8
    # global
    seed: int = 0
    normalize_theta: bool = False

    def __post_init__(self):
        positive = (
            "margin", "t_min", "t_max", "equiv_tol", "fan_tol",
            "admissibility_tol", "t_start", "t_stop", "surgery_margin",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config {name} must be > 0")
        counts = (
            "max_doublings", "t_count", "bary_n", "equiv_t_count",
            "equiv_edge_count", "spear_r_samples", "spear_theta_samples",
            "n_curves", "surgery_samples", "resolution",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"config {name} must be >= 1")
        if self.t_min >= self.t_max:
            raise ValueError("config needs t_min < t_max")
        if self.t_start >= self.t_stop:
            raise ValueError("config needs t_start < t_stop")
        if self.seed < 0:
            raise ValueError("config seed must be >= 0")
        self.leaves = tuple(float(x) for x in self.leaves)

    def build_settings(self) -> BuildSettings:
        return BuildSettings(
            margin=self.margin,
            max_doublings=self.max_doublings,
            t_min=self.t_min,
            t_max=self.t_max,
            t_count=self.t_count,
            bary_n=self.bary_n,
            equiv_t_count=self.equiv_t_count,
            equiv_edge_count=self.equiv_edge_count,
            equiv_tol=self.equiv_tol,
            fan_tol=self.fan_tol,
            spear_max_shrinks=self.spear_max_shrinks,
            spear_r_samples=self.spear_r_samples,
            spear_theta_samples=self.spear_theta_samples,
            with_spears=self.with_spears,
        )

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["leaves"] = list(self.leaves)
        return out


def _coerce(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    if field.type in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config {field.name} expects a boolean, got {raw!r}")
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    # comma separated floats
    return tuple(float(x) for x in raw.split(",") if x.strip())


def load_config(path: str | None, seed: int | None = None,
                normalize_theta: bool = False) -> RunConfig:
    """Parse a flat key=value file (# comments allowed) into a RunConfig.

    Command line --seed / --normalize-theta override the file.
    """
    values: dict = {}
    if path is not None:
        fields = {f.name: f for f in dataclasses.fields(RunConfig)}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(fields[key], raw)
    cfg = RunConfig(**values)
    if seed is not None:
        cfg.seed = seed
    if normalize_theta:
        cfg.normalize_theta = True
    return cfg


def _load_json(path: str):
    try:
        return read_json(path)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e


def _emit(report: dict, out: str | None) -> None:
    text = canonical_dumps(report)
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def _load_bundle(path: str) -> PolyhedralSpacetime:
    return PolyhedralSpacetime.from_json(_load_json(path))


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    cfg = load_config(args.config, args.seed)
    rep = AffineRepresentation.from_json(_load_json(args.representation))
    report = check_admissible(rep, tol=cfg.admissibility_tol)
    _emit(
        {
            "kind": "admissibility-report",
            "input": args.representation,
            "config": cfg.to_json(),
            "seed": cfg.seed,
            "report": report.to_json(),
        },
        args.out,
    )
    return 0 if report.verdict else 1


def _fan_summary(st: PolyhedralSpacetime, normalize: bool) -> dict:
    out = {}
    for puncture, pg in sorted(st.fans.items()):
        entry = {
            "corners": pg.r,
            "ell": pg.ell,
            "Theta": pg.Theta,
            "holonomy_residual": pg.holonomy_residual,
        }
        if normalize:
            entry["Theta_normalized"] = TWO_PI
            entry["theta_normalized"] = list(pg.theta_normalized)
        out[puncture] = entry
    return out


def cmd_build(args) -> int:
    cfg = load_config(args.config, args.seed, args.normalize_theta)
    rep = AffineRepresentation.from_json(_load_json(args.representation))
    tri = IdealTriangulationData.from_json(_load_json(args.triangulation))
    st = build(rep, tri, cfg.build_settings())
    Path(args.out).write_text(st.dumps())
    report = {
        "kind": "build-report",
        "inputs": {
            "representation": args.representation,
            "triangulation": args.triangulation,
        },
        "out": args.out,
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "certification": st.certification.to_json(),
        "fans": _fan_summary(st, cfg.normalize_theta),
        "spears": {s.puncture: {"radius": s.radius, "vertex_tau": s.vertex_tau}
                   for s in st.spears.values()},
    }
    _emit(report, None)
    return 0


def _delta_samples(sg, rng, n: int):
    # avoid r = 0 (complete mode) and stay inside the closed disk
    u = rng.uniform(1e-6, 1.0, size=n)
    r = sg.R * np.sqrt(u)
    if not sg.punctured:
        # exercise the flat core too, including tiny radii
        r[: n // 10] = sg.R * 1e-4 * u[: n // 10]
    theta = rng.uniform(0.0, TWO_PI, size=n)
    return r, theta, delta(sg, r, theta)


def cmd_surgery(args) -> int:
    cfg = load_config(args.config, args.seed)
    st = _load_bundle(args.bundle)
    profile = BoundaryProfile.from_json(_load_json(args.profile))
    if args.mode == "complete":
        sg = extend_complete(profile)
    else:
        sg = extend_compact(profile, margin=cfg.surgery_margin)

    rng = np.random.default_rng(cfg.seed)
    r, theta, d = _delta_samples(sg, rng, cfg.surgery_samples)
    det_resid = float(
        np.abs(np.linalg.det(induced_metric(sg, r[:1000], theta[:1000]))
               - d[:1000] * r[:1000] ** 2).max()
    )
    cert = completeness_certificate(sg)
    boundary = profile.value(theta[:100])
    boundary_exact = bool(
        np.array_equal(sg.value(np.full(100, sg.R), theta[:100]), boundary)
    )
    report = {
        "kind": "surgery-report",
        "input": args.bundle,
        "profile": profile.to_json(),
        "mode": sg.mode,
        "M": sg.M,
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "delta": {
            "samples": cfg.surgery_samples,
            "min": float(d.min()),
            "mean": float(d.mean()),
            "min_delta_r2": float((d * r**2).min()),
        },
        "metric_det_residual": det_resid,
        "boundary_exact": boundary_exact,
        "certificate": cert.to_json(),
        "divergence_at_puncture": divergence_check(sg),
    }
    spacelike = bool(d.min() > 0)
    if sg.mode == "compact":
        thetas = TWO_PI * (np.arange(64) + 0.5) / 64
        seam = sg.value(np.full(64, sg.R / 2), thetas)
        core = sg.value(np.full(64, sg.R / 4), thetas)
        report["seam_exact"] = bool(np.array_equal(seam, core))
        ok = spacelike and report["seam_exact"] and boundary_exact
    else:
        ok = spacelike and cert.conclusive and report["divergence_at_puncture"] \
            and boundary_exact
    if st.spears:
        report["spear_fit"] = {
            p: fits_spear(sg, s) for p, s in sorted(st.spears.items())
        }
    report["pass"] = ok
    _emit(report, args.out)
    return 0 if ok else 1


def cmd_causal(args) -> int:
    cfg = load_config(args.config, args.seed)
    if args.curves is not None:
        if args.curves < 1:
            raise ValueError("--curves must be >= 1")
        cfg.n_curves = args.curves
    st = _load_bundle(args.bundle)
    report = cauchy_time_report(
        st,
        n_curves=cfg.n_curves,
        seed=cfg.seed,
        t_start=cfg.t_start,
        t_stop=cfg.t_stop,
        leaves=cfg.leaves,
    )
    report["input"] = args.bundle
    report["config"] = cfg.to_json()
    _emit(report, args.out)
    return 0 if report["pass"] else 1


def cmd_mesh(args) -> int:
    cfg = load_config(args.config, args.seed)
    leaves = cfg.leaves
    if args.leaves is not None:
        leaves = tuple(float(x) for x in args.leaves.split(",") if x.strip())
    if not leaves:
        raise ValueError("mesh needs at least one leaf t value")
    if args.resolution is not None:
        cfg.resolution = args.resolution
    st = _load_bundle(args.bundle)
    verts, faces = mesh_data(st, leaves, cfg.resolution)
    export_mesh(st, leaves, cfg.resolution, args.out)
    _emit(
        {
            "kind": "mesh-report",
            "input": args.bundle,
            "out": args.out,
            "config": cfg.to_json(),
            "seed": cfg.seed,
            "leaves": list(leaves),
            "resolution": cfg.resolution,
            "vertices": len(verts),
            "faces": len(faces),
        },
        None,
    )
    return 0


def _demo_profile(st: PolyhedralSpacetime) -> BoundaryProfile:
    """A cap boundary that sits on the shaft of the first spear."""
    spear = st.spears[min(st.spears)]
    amp = 0.1 * spear.radius
    return BoundaryProfile(
        R=spear.radius,
        const=spear.ring_tau + 2 * amp,
        sin=(0.0, amp),
    )


def _run_stage(argv: list[str], save_stdout: Path | None = None) -> int:
    """Run a subcommand with stdout captured (reports go to files, not the table)."""
    import contextlib
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    if save_stdout is not None:
        save_stdout.write_text(buf.getvalue())
    return code


def cmd_demo(args) -> int:
    cfg = load_config(args.config, args.seed, args.normalize_theta)
    examples = builtin_examples()
    if args.name not in examples:
        raise ValueError(
            f"unknown demo {args.name!r}; available: {', '.join(sorted(examples))}"
        )
    ex = examples[args.name]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    common = (["--config", args.config] if args.config else []) \
        + ["--seed", str(cfg.seed)]
    rows = []

    rep_path = outdir / "rep.json"
    tri_path = outdir / "tri.json"
    rep_path.write_text(canonical_dumps(ex.representation.to_json()))
    tri_path.write_text(canonical_dumps(ex.triangulation.to_json()))

    code = _run_stage(
        ["validate", str(rep_path), "--out", str(outdir / "validate-report.json")]
        + common
    )
    rows.append(("validate", code, f"report {outdir / 'validate-report.json'}"))
    if code == 0:
        bundle = outdir / "bundle.json"
        code = _run_stage(
            ["build", str(rep_path), str(tri_path), "--out", str(bundle)]
            + common
            + (["--normalize-theta"] if cfg.normalize_theta else []),
            save_stdout=outdir / "build-report.json",
        )
        rows.append(("build", code, f"bundle {bundle}"))
    if code == 0:
        st = _load_bundle(str(bundle))
        profile_path = outdir / "profile.json"
        profile_path.write_text(canonical_dumps(_demo_profile(st).to_json()))
        for mode in ("complete", "compact"):
            sub = _run_stage(
                ["surgery", str(bundle), str(profile_path), "--mode", mode,
                 "--out", str(outdir / f"surgery-{mode}.json")] + common
            )
            rows.append((f"surgery[{mode}]", sub, f"report {outdir}/surgery-{mode}.json"))
            code = code or sub
    if code == 0:
        sub = _run_stage(
            ["causal", str(bundle), "--out", str(outdir / "causal-report.json")]
            + common
        )
        rows.append(("causal", sub, f"report {outdir}/causal-report.json"))
        code = code or sub
    if code == 0:
        mesh_path = outdir / "leaves.obj"
        sub = _run_stage(
            ["mesh", str(bundle), "--out", str(mesh_path)] + common,
            save_stdout=outdir / "mesh-report.json",
        )
        rows.append(("mesh", sub, f"obj {mesh_path}"))
        code = code or sub

    width = max(len(r[0]) for r in rows)
    print(f"demo {args.name}: summary")
    for stage, rc, detail in rows:
        status = "ok" if rc == 0 else f"FAIL({rc})"
        print(f"  {stage:<{width}}  {status:<8} {detail}")
    return code


# ---------------------------------------------------------------------------
# parser


def _add_common(p, config=True, seed=True, out=None):
    if config:
        p.add_argument("--config", help="flat key=value config file")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    if out is not None:
        p.add_argument("--out", default=out[0], help=out[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btzgeo",
        description="certified flat spacetimes from punctured-surface holonomy",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="admissibility report for a representation file")
    p.add_argument("representation", help="representation JSON file")
    _add_common(p, out=(None, "also write the report here"))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", help="build and certify a spacetime bundle")
    p.add_argument("representation", help="representation JSON file")
    p.add_argument("triangulation", help="ideal triangulation JSON file")
    p.add_argument("--normalize-theta", action="store_true",
                   help="report per-puncture angles rescaled to total 2 pi")
    _add_common(p, out=("bundle.json", "bundle output path"))
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("surgery", help="certify a spacelike cap over a bundle")
    p.add_argument("bundle", help="spacetime bundle JSON file")
    p.add_argument("profile", help="boundary profile JSON file")
    p.add_argument("--mode", choices=("complete", "compact"), default="complete")
    _add_common(p, out=(None, "also write the report here"))
    p.set_defaults(func=cmd_surgery)

    p = sub.add_parser("causal", help="randomized causal-curve report")
    p.add_argument("bundle", help="spacetime bundle JSON file")
    p.add_argument("--curves", type=int, default=None, help="number of traced curves")
    _add_common(p, out=(None, "also write the report here"))
    p.set_defaults(func=cmd_causal)

    p = sub.add_parser("mesh", help="export sampled leaf meshes")
    p.add_argument("bundle", help="spacetime bundle JSON file")
    p.add_argument("--leaves", default=None, help="comma separated leaf t values")
    p.add_argument("--resolution", type=int, default=None, help="barycentric subdivisions")
    _add_common(p, out=("mesh.obj", "mesh output path (.obj or .json)"))
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("demo", help="full pipeline on a builtin example")
    p.add_argument("name", help="builtin example name (see representations)")
    p.add_argument("--normalize-theta", action="store_true",
                   help="report per-puncture angles rescaled to total 2 pi")
    _add_common(p, out=("demo-out", "output directory"))
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GeometryError as e:
        sys.stderr.write(canonical_dumps({
            "kind": "error",
            "category": "mathematical-failure",
            "error": type(e).__name__,
            "message": str(e),
        }))
        return 1
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        sys.stderr.write(canonical_dumps({
            "kind": "error",
            "category": "input-error",
            "error": type(e).__name__,
            "message": str(e),
        }))
        return 2


if __name__ == "__main__":
    sys.exit(main())
