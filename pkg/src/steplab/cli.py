"""Command-line front end: scenario ingestion, experiment execution, CSV/report emission.

Subcommands: ``orbit`` (orbital-line geometry and phase-portrait traces),
``s2s`` (step-to-step episodes), ``walk`` (kinematic walking episodes) and
``validate`` (schema check only). Output files are byte-reproducible under a
fixed seed; wall-clock quantities (solver latency) go to stdout only.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import ik_qp, kinematics, simlab, stepper, template

log = logging.getLogger("steplab")

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schema": SCHEMA_VERSION,
    "seed": 0,
    "lip": {"g": 9.81, "z0": 1.0, "T": 0.4},
    "orbit": {"v_x": [0.0, 0.15, 0.25, 0.3], "v_y_d": 0.0, "uL_star": 0.3, "samples": 41},
    "s2s": {
        "vx_segments": [[0.0, 25], [0.15, 25], [0.25, 25], [0.3, 25]],
        "v_y_d": 0.0,
        "uL_star": 0.3,
        "mismatch_y": None,
        "noise_std": [0.0, 0.0],
        "u_limit": 0.5,
        "first_landing": "R",
    },
    "adaptation": {"enabled": False, "hidden": 128, "seed": 42, "gamma": 1e-4},
    "walk": {
        "model": None,
        "z0": 0.85,
        "dt": 0.001,
        "n_steps": 10,
        "v_x_d": 0.1,
        "v_y_d": 0.0,
        "uL_star": 0.2,
        "apex": 0.08,
        "kp": 20.0,
        "komega": 10.0,
    },
    "assertions": {},
}


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def _check(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _check_number(doc, path, positive=False):
    _check(isinstance(doc, (int, float)) and not isinstance(doc, bool), path, "expected a number")
    if positive:
        _check(doc > 0, path, "must be > 0")


def validate_config(doc: dict) -> dict:
    """Schema-check a scenario document merged over the defaults; returns the merged config."""
    _check(isinstance(doc, dict), "config", "expected a JSON object")
    _check(doc.get("schema", SCHEMA_VERSION) == SCHEMA_VERSION, "schema",
           f"expected {SCHEMA_VERSION}, got {doc.get('schema')!r}")
    cfg = _deep_merge(DEFAULT_CONFIG, doc)
    lip = cfg["lip"]
    for key in ("g", "z0", "T"):
        _check_number(lip.get(key), f"lip.{key}", positive=True)
    _check(isinstance(cfg["seed"], int), "seed", "expected an integer")
    s2s = cfg["s2s"]
    segs = s2s.get("vx_segments")
    _check(isinstance(segs, list) and segs, "s2s.vx_segments", "expected a non-empty array")
    for i, seg in enumerate(segs):
        _check(isinstance(seg, list) and len(seg) == 2, f"s2s.vx_segments[{i}]", "expected [v_x, steps]")
        _check_number(seg[0], f"s2s.vx_segments[{i}][0]")
        _check(isinstance(seg[1], int) and seg[1] > 0, f"s2s.vx_segments[{i}][1]", "expected steps > 0")
    _check(s2s.get("first_landing") in ("L", "R"), "s2s.first_landing", "expected 'L' or 'R'")
    mis = s2s.get("mismatch_y")
    if mis is not None:
        _check(isinstance(mis, dict), "s2s.mismatch_y", "expected an object or null")
        _check(mis.get("mode") in ("constant", "state-affine", "impact-loss", "height-offset"),
               "s2s.mismatch_y.mode", f"unknown mode {mis.get('mode')!r}")
    adapt = cfg["adaptation"]
    _check(isinstance(adapt.get("enabled"), bool), "adaptation.enabled", "expected a boolean")
    _check(isinstance(adapt.get("hidden"), int) and adapt["hidden"] >= 1, "adaptation.hidden",
           "expected an integer >= 1")
    _check_number(adapt.get("gamma"), "adaptation.gamma", positive=True)
    walk = cfg["walk"]
    for key in ("z0", "dt", "apex", "kp", "komega"):
        _check_number(walk.get(key), f"walk.{key}", positive=True)
    _check(isinstance(walk.get("n_steps"), int) and walk["n_steps"] > 0, "walk.n_steps",
           "expected an integer > 0")
    if walk.get("model") is not None:
        model_path = Path(str(walk["model"]))
        _check(model_path.exists(), "walk.model", f"model file not found: {model_path}")
        kinematics.load_model(model_path)  # raises ModelSchemaError with its own path
    return cfg


def _mismatch_from(doc) -> simlab.MismatchModel | None:
    if doc is None:
        return None
    mode = doc["mode"]
    if mode == "constant":
        return simlab.MismatchModel.constant(doc.get("xi", [0.0, 0.0]))
    if mode == "state-affine":
        return simlab.MismatchModel.state_affine(doc.get("C", [[0, 0], [0, 0]]), doc.get("xi", [0.0, 0.0]))
    if mode == "impact-loss":
        return simlab.MismatchModel.impact_loss(doc.get("kappa", 0.0))
    return simlab.MismatchModel.height_offset(doc.get("dz", 0.0))


def _adapt_from(cfg: dict) -> simlab.AdaptSettings:
    a = cfg["adaptation"]
    return simlab.AdaptSettings(enabled=a["enabled"], hidden=a["hidden"], seed=a["seed"], gamma=a["gamma"])


def _s2s_config(cfg: dict) -> simlab.S2sConfig:
    lip, s2s = cfg["lip"], cfg["s2s"]
    return simlab.S2sConfig(
        g=lip["g"], z0=lip["z0"], T=lip["T"],
        vx_segments=tuple((float(v), int(n)) for v, n in s2s["vx_segments"]),
        v_y_d=float(s2s["v_y_d"]),
        uL_star=float(s2s["uL_star"]),
        mismatch_y=_mismatch_from(s2s["mismatch_y"]),
        adapt=_adapt_from(cfg),
        noise_std=tuple(float(x) for x in s2s["noise_std"]),
        seed=int(cfg["seed"]),
        u_limit=float(s2s["u_limit"]),
        first_landing=s2s["first_landing"],
    )


def _walk_config(cfg: dict) -> simlab.WalkConfig:
    lip, walk = cfg["lip"], cfg["walk"]
    return simlab.WalkConfig(
        model=walk["model"],
        g=lip["g"], z0=float(walk["z0"]), T=lip["T"],
        dt=float(walk["dt"]), n_steps=int(walk["n_steps"]),
        v_x_d=float(walk["v_x_d"]), v_y_d=float(walk["v_y_d"]),
        uL_star=float(walk["uL_star"]), apex=float(walk["apex"]),
        kp=float(walk["kp"]), komega=float(walk["komega"]),
        mismatch_y=_mismatch_from(walk.get("mismatch_y")),
        adapt=_adapt_from(cfg),
        seed=int(cfg["seed"]),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_orbit(cfg: dict, out_dir: Path) -> int:
    lip, orbit = cfg["lip"], cfg["orbit"]
    params = template.make_params(lip["g"], lip["z0"], lip["T"])
    lines = template.orbital_lines(params, orbit["v_y_d"])
    sm = template.step_matrices(params)
    gain = stepper.deadbeat_gain(sm)
    n = int(orbit["samples"])

    rows = [("name", "value")]
    rows += [("sigma1", repr(lines.sigma1)), ("sigma2", repr(lines.sigma2)), ("d2", repr(lines.d2))]
    rows += [("K1", repr(float(gain.K[0]))), ("K2", repr(float(gain.K[1])))]
    trace_lines = ["orbit,v_cmd,sample,t,p,v"]
    for v_x in orbit["v_x"]:
        tgt = template.p1_target(params, float(v_x))
        rows += [
            (f"u_star_vx_{v_x}", repr(tgt.u_star)),
            (f"x_star_p_vx_{v_x}", repr(tgt.x_star.p)),
            (f"x_star_v_vx_{v_x}", repr(tgt.x_star.v)),
        ]
        start = template.LipState(tgt.x_star.p - tgt.u_star, tgt.x_star.v)
        for i in range(n):
            t = params.T * i / (n - 1) if n > 1 else 0.0
            s = template.flow(params, start, t)
            trace_lines.append(f"P1,{v_x!r},{i},{t!r},{s.p!r},{s.v!r}")
    tgt_y = template.p2_targets(params, orbit["v_y_d"], orbit["uL_star"])
    for label, (y_star, u_star) in (("L", (tgt_y.yL_star, tgt_y.uL_star)), ("R", (tgt_y.yR_star, tgt_y.uR_star))):
        start = template.LipState(y_star.p - u_star, y_star.v)
        for i in range(n):
            t = params.T * i / (n - 1) if n > 1 else 0.0
            s = template.flow(params, start, t)
            trace_lines.append(f"P2{label},{orbit['v_y_d']!r},{i},{t!r},{s.p!r},{s.v!r}")

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "orbit_params.csv").write_text("\n".join(",".join(r) for r in rows) + "\n", newline="\n")
    (out_dir / "orbit_traces.csv").write_text("\n".join(trace_lines) + "\n", newline="\n")
    print(f"orbit: wrote {out_dir / 'orbit_params.csv'} and {out_dir / 'orbit_traces.csv'}")
    return 0


def cmd_s2s(cfg: dict, out_dir: Path) -> int:
    config = _s2s_config(cfg)
    episode = simlab.run_s2s_episode(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    episode.write(out_dir, prefix="s2s")

    summary = []
    segments = simlab.segment_velocity_errors(episode, config)
    for v_cmd, mean, rel in segments:
        summary.append(f"segment v_x={v_cmd}: mean_avg_velocity={mean!r} rel_err={rel!r}")
    ratio = None
    if config.adapt.enabled:
        baseline = simlab.run_s2s_episode(replace(config, adapt=simlab.AdaptSettings(enabled=False)))
        e_off = simlab.final_mean_err(baseline)
        e_on = simlab.final_mean_err(episode)
        ratio = e_on / e_off if e_off > 0 else float("nan")
        summary.append(f"final-100-step mean err_norm without adaptation: {e_off!r}")
        summary.append(f"final-100-step mean err_norm with adaptation:    {e_on!r}")
        summary.append(f"adaptation error ratio (on/off): {ratio!r}")
    text = "\n".join(summary) + "\n"
    (out_dir / "s2s_summary.txt").write_text(text, newline="\n")
    print(text, end="")

    failures = []
    assertions = cfg["assertions"]
    tol = assertions.get("velocity_tracking_rel_err")
    if tol is not None:
        for v_cmd, mean, rel in segments:
            if not rel <= tol:
                failures.append(f"segment v_x={v_cmd}: rel_err {rel:.4f} > {tol}")
    max_ratio = assertions.get("adaptation_ratio_max")
    if max_ratio is not None and ratio is not None and not ratio <= max_ratio:
        failures.append(f"adaptation ratio {ratio:.4f} > {max_ratio}")
    for f in failures:
        print(f"ASSERTION FAILED: {f}", file=sys.stderr)
    return 1 if failures else 0


def cmd_walk(cfg: dict, out_dir: Path) -> int:
    config = _walk_config(cfg)
    episode = simlab.run_kinematic_walk(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    episode.write(out_dir, prefix="walk")

    period2 = simlab.period2_metric(episode)
    band = simlab.com_height_band(episode)
    td = simlab.max_touchdown_err(episode)
    summary = (
        f"period2_preimpact_config_diff: {period2!r}\n"
        f"com_height_band: {band!r}\n"
        f"max_touchdown_err: {td!r}\n"
    )
    (out_dir / "walk_summary.txt").write_text(summary, newline="\n")
    print(summary, end="")
    lat = sorted(r.solve_latency for r in episode.ticks)
    p50 = lat[len(lat) // 2]
    p99 = lat[min(len(lat) - 1, int(0.99 * len(lat)))]
    print(f"solve latency p50={p50 * 1e3:.3f} ms p99={p99 * 1e3:.3f} ms (console only)")

    failures = []
    assertions = cfg["assertions"]
    for key, val in (("period2_max", period2), ("com_height_band", band), ("touchdown_max", td)):
        bound = assertions.get(key)
        if bound is not None and not val <= bound:
            failures.append(f"{key}: {val!r} > {bound}")
    for f in failures:
        print(f"ASSERTION FAILED: {f}", file=sys.stderr)
    return 1 if failures else 0


def cmd_validate(cfg: dict, out_dir: Path) -> int:
    print("config ok")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _apply_set(cfg: dict, assignment: str) -> dict:
    if "=" not in assignment:
        raise ConfigError(f"--set {assignment!r}: expected key=value")
    key, _, raw = assignment.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value
    return cfg


def main(argv=None) -> int:
    level = os.environ.get("STEPLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="steplab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("orbit", cmd_orbit), ("s2s", cmd_s2s), ("walk", cmd_walk), ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="scenario JSON (defaults used if omitted)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field (dotted path, JSON value)")
        p.add_argument("--no-adapt", action="store_true", help="force adaptation off")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)

    try:
        doc = {}
        if args.config is not None:
            try:
                doc = json.loads(Path(args.config).read_text())
            except FileNotFoundError:
                raise ConfigError(f"config: file not found: {args.config}")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: invalid JSON: {exc}")
        for assignment in args.overrides:
            doc = _apply_set(doc, assignment)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.no_adapt:
            doc.setdefault("adaptation", {})["enabled"] = False
        cfg = validate_config(doc)
    except (ConfigError, kinematics.ModelSchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        return args.fn(cfg, args.out)
    except (template.ParameterError, stepper.GainSynthesisError, ik_qp.IkInfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
