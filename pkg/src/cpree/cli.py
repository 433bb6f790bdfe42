"""Batch experiment driver.

Usage:
    cpree run <config.json> [--seed S] [--workers N] [--out PATH]
    cpree validate <config.json>

Configs are JSON with a required "version": 1; unknown keys are rejected
before any simulation starts. Results go to the estimator CSV schema
(plus a trailing timestamp column, the only nondeterministic field) or to
a JSON report for the renormalization experiments. The master seed is
resolved from --seed, then the config, then the CPREE_SEED environment
variable.
"""

import argparse
import csv
import datetime
import json
import os
import sys
from dataclasses import dataclass, field

from . import estimators, oracle, renorm
from ._rng import derive_seed
from .background import InitLaw, all_sites
from .events import Box, Params

CSV_HEADER = ["config_digest", "estimator_name", "d", "gamma", "delta0", "delta1",
              "p", "box_L", "horizon", "variant", "value", "ci_low", "ci_high",
              "replicates", "master_seed"]

EXPERIMENTS = {
    "survival": ({"box", "horizon", "init"}, set()),
    "duality": ({"box", "A", "B", "t"}, set()),
    "upper-density": ({"box"}, {"t", "t_grid"}),
    "critical-scan": ({"box", "horizon", "init", "p_grid"}, {"threshold"}),
    "fstc": ({"n", "L", "T", "variant"}, set()),
    "orthant": ({"n", "L", "T", "N", "M"}, set()),
    "blocks": ({"geometry"}, {"start"}),
    "field": ({"geometry", "rows"}, {"cols", "p_target"}),
    "op-compare": ({"p_bond", "depth"}, set()),
    "oracle-compare": (set(), {"n_sites", "t_origin", "t_survive", "A", "B", "t_duality"}),
}

COMMON_REQUIRED = {"version", "experiment", "params", "replicates"}
COMMON_OPTIONAL = {"master_seed", "workers", "output_path"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    params: Params
    replicates: int
    master_seed: int = None
    workers: int = 1
    output_path: str = None
    extra: dict = field(default_factory=dict)


def _site(v, d):
    site = (v,) if isinstance(v, int) else tuple(v)
    if len(site) != d or not all(isinstance(c, int) for c in site):
        raise ConfigError(f"malformed site {v!r} for d={d}")
    return site


def _site_list(v, d):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a nonempty list of sites")
    return [_site(s, d) for s in v]


def _parse_params(obj):
    allowed = {"d", "gamma", "delta0", "delta1", "p"}
    if not isinstance(obj, dict) or set(obj) - allowed:
        raise ConfigError(f"params keys must be {sorted(allowed)}")
    missing = allowed - set(obj)
    if missing:
        raise ConfigError(f"params missing {sorted(missing)}")
    try:
        return Params(int(obj["d"]), float(obj["gamma"]), float(obj["delta0"]),
                      float(obj["delta1"]), float(obj["p"]))
    except ValueError as e:
        raise ConfigError(str(e))


def _parse_box(obj):
    allowed = {"half_width", "boundary"}
    if not isinstance(obj, dict) or set(obj) - allowed or "half_width" not in obj:
        raise ConfigError("box needs half_width (and optionally boundary)")
    try:
        return Box(int(obj["half_width"]), obj.get("boundary", "closed"))
    except ValueError as e:
        raise ConfigError(str(e))


def _parse_init(obj, d):
    allowed = {"background", "infected"}
    if not isinstance(obj, dict) or set(obj) - allowed or "infected" not in obj:
        raise ConfigError("init needs infected (and optionally background)")
    bg = obj.get("background", "zeros")
    if isinstance(bg, (int, float)) and not isinstance(bg, bool):
        if not (0.0 <= float(bg) <= 1.0):
            raise ConfigError("background density must lie in [0, 1]")
        bg = float(bg)
    elif bg not in ("zeros", "ones"):
        raise ConfigError(f"unknown background law {bg!r}")
    return InitLaw(bg, tuple(_site_list(obj["infected"], d)))


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("version") != 1:
        raise ConfigError('config needs "version": 1')
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {sorted(EXPERIMENTS)}")
    required, optional = EXPERIMENTS[exp]
    allowed = COMMON_REQUIRED | COMMON_OPTIONAL | required | optional
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    missing = (COMMON_REQUIRED | required) - set(raw)
    if missing:
        raise ConfigError(f"missing config keys {sorted(missing)}")
    params = _parse_params(raw["params"])
    replicates = int(raw["replicates"])
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    cfg = ExperimentConfig(
        experiment=exp, params=params, replicates=replicates,
        master_seed=raw.get("master_seed"), workers=workers,
        output_path=raw.get("output_path"))
    d = params.d

    extra = {}
    if exp in ("survival", "duality", "upper-density", "critical-scan"):
        if "box" in raw:
            extra["box"] = _parse_box(raw["box"])
    if exp == "survival":
        extra["horizon"] = float(raw["horizon"])
        extra["init"] = _parse_init(raw["init"], d)
    elif exp == "duality":
        extra["A"] = _site_list(raw["A"], d)
        extra["B"] = _site_list(raw["B"], d)
        extra["t"] = float(raw["t"])
    elif exp == "upper-density":
        if ("t" in raw) == ("t_grid" in raw):
            raise ConfigError("upper-density needs exactly one of t, t_grid")
        if "t" in raw:
            extra["t_grid"] = [float(raw["t"])]
        else:
            extra["t_grid"] = [float(x) for x in raw["t_grid"]]
    elif exp == "critical-scan":
        extra["horizon"] = float(raw["horizon"])
        extra["init"] = _parse_init(raw["init"], d)
        extra["p_grid"] = [float(x) for x in raw["p_grid"]]
        extra["threshold"] = float(raw.get("threshold", 0.5))
    elif exp == "fstc":
        for k in ("n", "L", "T"):
            extra[k] = raw[k]
        extra["variant"] = raw["variant"]
        try:
            estimators.fstc_geometry(int(raw["n"]), int(raw["L"]), float(raw["T"]),
                                     raw["variant"], d)
        except ValueError as e:
            raise ConfigError(str(e))
    elif exp == "orthant":
        for k in ("n", "L", "T", "N", "M"):
            extra[k] = raw[k]
        if not (0 <= int(raw["n"]) < int(raw["L"])):
            raise ConfigError("need 0 <= n < L")
    elif exp in ("blocks", "field"):
        g = raw["geometry"]
        allowed_g = {"n", "a", "b", "k"}
        if not isinstance(g, dict) or set(g) != allowed_g:
            raise ConfigError(f"geometry keys must be {sorted(allowed_g)}")
        try:
            extra["geometry"] = renorm.build_block_geometry(g["n"], g["a"], g["b"], g["k"])
        except ValueError as e:
            raise ConfigError(str(e))
        if exp == "blocks":
            start = raw.get("start", {"x": [0] * d, "t": 0.0})
            if set(start) - {"x", "t"}:
                raise ConfigError("start keys are x and t")
            extra["start"] = (_site(start.get("x", [0] * d), d), float(start.get("t", 0.0)))
        else:
            extra["rows"] = int(raw["rows"])
            extra["cols"] = int(raw.get("cols", raw["rows"]))
            extra["p_target"] = float(raw.get("p_target", 0.25))
    elif exp == "op-compare":
        extra["p_bond"] = float(raw["p_bond"])
        extra["depth"] = int(raw["depth"])
        if not (0.0 <= extra["p_bond"] <= 1.0) or extra["depth"] < 1:
            raise ConfigError("need p_bond in [0,1] and depth >= 1")
    elif exp == "oracle-compare":
        extra["n_sites"] = int(raw.get("n_sites", 3))
        if params.d != 1 or not (1 <= extra["n_sites"] <= oracle.MAX_SITES):
            raise ConfigError("oracle-compare needs d=1 and n_sites in 1..4")
        extra["t_origin"] = float(raw.get("t_origin", 0.5))
        extra["t_survive"] = float(raw.get("t_survive", 1.0))
        extra["t_duality"] = float(raw.get("t_duality", 0.5))
        extra["A"] = _site_list(raw.get("A", [[0]]), d)
        extra["B"] = _site_list(raw.get("B", [[-1], [0], [1]]), d)
    cfg.extra = extra
    return cfg


def _row(cfg, name, variant, value, ci_low, ci_high, box_L="", horizon="", seed=None,
         digest=""):
    p = cfg.params
    return {"config_digest": digest, "estimator_name": name, "d": p.d,
            "gamma": p.gamma, "delta0": p.delta0, "delta1": p.delta1, "p": p.p,
            "box_L": box_L, "horizon": horizon, "variant": variant, "value": value,
            "ci_low": ci_low, "ci_high": ci_high, "replicates": cfg.replicates,
            "master_seed": cfg.master_seed if seed is None else seed}


def _est_row(cfg, name, variant, est, box_L="", horizon="", extra_cols=None):
    row = _row(cfg, name, variant, est.value, est.ci_low, est.ci_high, box_L,
               horizon, est.master_seed, est.config_digest)
    if extra_cols:
        row.update(extra_cols)
    return row


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else v


def write_rows(path, rows, extra_header=()):
    header = CSV_HEADER + list(extra_header) + ["timestamp"]
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(h, "")) for h in header[:-1]] + [stamp])


def emit_series(series, path):
    """Plot-ready long-format CSV: x, y, ci_low, ci_high per row."""
    series = list(series)
    if not series:
        raise ValueError("empty results")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "ci_low", "ci_high"])
        for x, est in series:
            w.writerow([_fmt(float(x)), _fmt(est.value), _fmt(est.ci_low),
                        _fmt(est.ci_high)])


# -- experiment runners ---------------------------------------------------------

def _run_survival(cfg):
    e = cfg.extra
    est = estimators.estimate_survival(cfg.params, e["init"], e["box"], e["horizon"],
                                       cfg.replicates, cfg.master_seed, cfg.workers)
    rows = [_est_row(cfg, "survival", "", est, e["box"].half_width, e["horizon"])]
    return rows, [(0.0, est)], None, f"survival={est.value:.6g} [{est.ci_low:.4g}, {est.ci_high:.4g}]"


def _run_duality(cfg):
    e = cfg.extra
    resid, s1, s2 = estimators.estimate_duality_residual(
        cfg.params, e["A"], e["B"], e["t"], e["box"], cfg.replicates,
        cfg.master_seed, cfg.workers, return_sides=True)
    L = e["box"].half_width
    rows = [_est_row(cfg, "duality", "side_AB", s1, L, e["t"]),
            _est_row(cfg, "duality", "side_BA", s2, L, e["t"]),
            _est_row(cfg, "duality", "residual", resid, L, e["t"])]
    return rows, [(0.0, resid)], None, f"duality residual={resid.value:+.6g}"


def _run_upper_density(cfg):
    e = cfg.extra
    curve = estimators.estimate_upper_density_curve(
        cfg.params, e["t_grid"], e["box"], cfg.replicates, cfg.master_seed, cfg.workers)
    rows = [_est_row(cfg, "upper_density", f"t={t:g}", est, e["box"].half_width, t)
            for t, est in curve]
    last = curve[-1][1]
    return rows, curve, None, f"upper density at t={curve[-1][0]:g}: {last.value:.6g}"


def _run_scan(cfg):
    e = cfg.extra
    res = estimators.scan_critical(cfg.params, e["p_grid"], e["init"], e["box"],
                                   e["horizon"], cfg.replicates, e["threshold"],
                                   cfg.master_seed, cfg.workers)
    rows = [_est_row(cfg, "critical_scan", f"p={p:.17g}", est, e["box"].half_width,
                     e["horizon"]) for p, est in zip(res.grid, res.estimates)]
    flag = "p-invariant" if res.p_invariant else (
        f"pseudo_critical={res.pseudo_critical:.6g}" if res.pseudo_critical is not None
        else "no-crossing")
    rows.append(_row(cfg, "critical_scan", flag,
                     res.pseudo_critical if res.pseudo_critical is not None else "",
                     "", "", e["box"].half_width, e["horizon"], digest=res.config_digest))
    series = list(zip(res.grid, res.estimates))
    return rows, series, None, f"critical scan: {flag}"


def _run_fstc(cfg):
    e = cfg.extra
    geom = estimators.fstc_geometry(int(e["n"]), int(e["L"]), float(e["T"]),
                                    e["variant"], cfg.params.d)
    est = estimators.estimate_fstc(cfg.params, int(e["n"]), int(e["L"]), float(e["T"]),
                                   e["variant"], cfg.replicates, cfg.master_seed,
                                   cfg.workers)
    rows = [_est_row(cfg, "fstc", e["variant"], est, geom[1], geom[2])]
    return rows, [(float(e["L"]), est)], None, f"fstc {e['variant']}={est.value:.6g}"


def _run_orthant(cfg):
    e = cfg.extra
    rep = estimators.check_orthant_inequalities(
        cfg.params, int(e["n"]), int(e["L"]), float(e["T"]), int(e["N"]), int(e["M"]),
        cfg.replicates, cfg.master_seed, cfg.workers)
    rows = []
    for tag, chk in (("counts", rep.ineq_counts), ("sides", rep.ineq_sides)):
        rows.append(_row(cfg, "orthant", f"{tag}_lhs", chk.lhs, "", "", e["L"], e["T"],
                         digest=rep.config_digest))
        rows.append(_row(cfg, "orthant", f"{tag}_rhs", chk.rhs, "", "", e["L"], e["T"],
                         digest=rep.config_digest))
        rows.append(_row(cfg, "orthant", f"{tag}_margin", chk.margin,
                         chk.margin - 3 * chk.se, chk.margin + 3 * chk.se,
                         e["L"], e["T"], digest=rep.config_digest))
    verdict = "holds" if rep.holds() else "VIOLATED"
    if rep.degenerate_window:
        verdict += " (degenerate window)"
    return rows, None, None, f"orthant inequalities: {verdict}"


def _run_blocks(cfg):
    e = cfg.extra
    est = renorm.estimate_block_event(cfg.params, e["geometry"], e["start"],
                                      cfg.replicates, cfg.master_seed, cfg.workers)
    g = e["geometry"]
    doc = {"geometry": renorm.asdict_geom(g) | {"c_offset": g.c_offset},
           "start": [list(e["start"][0]), e["start"][1]],
           "block_event": {"value": est.value, "ci_low": est.ci_low,
                           "ci_high": est.ci_high, "replicates": est.replicates},
           "master_seed": cfg.master_seed}
    rows = [_est_row(cfg, "block_event", f"k={g.k}", est, g.box_half_width, g.horizon)]
    return rows, None, doc, f"block event={est.value:.6g}"


def _run_field(cfg):
    e = cfg.extra
    doc = renorm.domination_report(cfg.params, e["geometry"], e["rows"],
                                   cfg.replicates, cfg.master_seed,
                                   e["p_target"], cfg.workers)
    summary = (f"density={doc['density']['value']:.4g} vs threshold "
               f"{doc['lss_threshold']:.4g}; certificate={doc['certificate']}")
    return None, None, doc, summary


def _run_op_compare(cfg):
    e = cfg.extra
    est = renorm.op_survival(e["p_bond"], e["depth"], cfg.replicates, cfg.master_seed)
    exact = renorm.op_survival_exact(e["p_bond"], e["depth"])
    rows = [_est_row(cfg, "op_survival", f"p_bond={e['p_bond']:g}", est, "",
                     e["depth"], {"exact": float(exact),
                                  "abs_error": abs(est.value - exact)})]
    return (rows, None, None,
            f"op survival={est.value:.6g} exact={exact:.6g}"), ["exact", "abs_error"]


def _run_oracle_compare(cfg):
    e = cfg.extra
    p = cfg.params
    ns = e["n_sites"]
    L = (ns - 1) // 2
    if 2 * L + 1 != ns:
        raise ConfigError("oracle-compare needs an odd n_sites (centered box)")
    box = Box(L)
    gen = oracle.build_generator(p, ns)
    center = L  # chain index of the origin
    rows = []

    def check(name, est, exact, t):
        hw = est.half_width()
        rows.append(_est_row(cfg, "oracle_compare", name, est, L, t,
                             {"exact": float(exact),
                              "abs_error": abs(est.value - exact),
                              "within_3hw": abs(est.value - exact) <= 3 * hw}))

    all_ones = oracle.point_distribution(ns, [1] * ns, [1] * ns)
    est = estimators.estimate_upper_density(p, e["t_origin"], box, cfg.replicates,
                                            derive_seed(cfg.master_seed, 10), cfg.workers)
    exact = oracle.exact_event_prob(gen, all_ones, e["t_origin"],
                                    oracle.infected_indicator(ns, center))
    check("origin_infected", est, exact, e["t_origin"])

    init = InitLaw("ones", all_sites(box, 1))
    est = estimators.estimate_survival(p, init, box, e["t_survive"], cfg.replicates,
                                       derive_seed(cfg.master_seed, 11), cfg.workers)
    exact = oracle.exact_event_prob(gen, all_ones, e["t_survive"],
                                    oracle.any_infected_indicator(ns))
    check("survival", est, exact, e["t_survive"])

    A, B = e["A"], e["B"]
    resid, s1, s2 = estimators.estimate_duality_residual(
        p, A, B, e["t_duality"], box, cfg.replicates,
        derive_seed(cfg.master_seed, 12), cfg.workers, return_sides=True)
    chainA = [a[0] + L for a in A]
    chainB = [b[0] + L for b in B]
    exact1 = oracle.exact_event_prob(gen, oracle.product_background_distribution(ns, p.p, chainA),
                                     e["t_duality"], oracle.infected_meets(ns, chainB))
    exact2 = oracle.exact_event_prob(gen, oracle.product_background_distribution(ns, p.p, chainB),
                                     e["t_duality"], oracle.infected_meets(ns, chainA))
    check("duality_AB", s1, exact1, e["t_duality"])
    check("duality_BA", s2, exact2, e["t_duality"])
    check("duality_residual", resid, 0.0, e["t_duality"])
    worst = max(r["abs_error"] for r in rows)
    return (rows, None, None, f"oracle compare: max |estimate-exact|={worst:.4g}"), \
        ["exact", "abs_error", "within_3hw"]


def run(config_path, seed_override=None, workers_override=None, out_override=None):
    """Execute a config; returns the process exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if seed_override is not None:
        cfg.master_seed = seed_override
    if cfg.master_seed is None:
        env = os.environ.get("CPREE_SEED")
        if env is not None:
            try:
                cfg.master_seed = int(env)
            except ValueError:
                print("config error: CPREE_SEED is not an integer", file=sys.stderr)
                return 2
    if cfg.master_seed is None:
        print("config error: no master seed (config, --seed, or CPREE_SEED)",
              file=sys.stderr)
        return 2
    if workers_override is not None:
        cfg.workers = workers_override
    if out_override is not None:
        cfg.output_path = out_override
    if cfg.output_path is None:
        cfg.output_path = f"cpree_{cfg.experiment.replace('-', '_')}_out"

    runners = {"survival": _run_survival, "duality": _run_duality,
               "upper-density": _run_upper_density, "critical-scan": _run_scan,
               "fstc": _run_fstc, "orthant": _run_orthant, "blocks": _run_blocks,
               "field": _run_field, "op-compare": _run_op_compare,
               "oracle-compare": _run_oracle_compare}
    try:
        result = runners[cfg.experiment](cfg)
    except (ValueError, ConfigError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3

    extra_header = ()
    if isinstance(result[0], tuple):
        (rows, series, doc, summary), extra_header = result
    else:
        rows, series, doc, summary = result
    try:
        written = []
        if rows is not None:
            path = cfg.output_path if cfg.output_path.endswith(".csv") \
                else cfg.output_path + ".csv"
            write_rows(path, rows, extra_header)
            written.append(path)
        if doc is not None:
            jpath = cfg.output_path if cfg.output_path.endswith(".json") \
                else cfg.output_path + ".json"
            with open(jpath, "w") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
            written.append(jpath)
        if series is not None and rows is not None:
            spath = (cfg.output_path[:-4] if cfg.output_path.endswith(".csv")
                     else cfg.output_path) + "_series.csv"
            emit_series(series, spath)
            written.append(spath)
    except OSError as e:
        print(f"runtime failure: cannot write output: {e}", file=sys.stderr)
        return 3
    print(f"{cfg.experiment}: {summary} -> {', '.join(written)}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cpree",
        description="batch driver for contact-process-in-evolving-environment experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    p_run.add_argument("--workers", type=int, default=None, help="worker pool size")
    p_run.add_argument("--out", default=None, help="output path override")
    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        print(f"valid: {cfg.experiment} experiment, {cfg.replicates} replicates")
        return 0
    return run(args.config, args.seed, args.workers, args.out)


if __name__ == "__main__":
    sys.exit(main())
