"""Command-line interface: simulate, bounds, audit, figure.

Reports are versioned JSON with an embedded hash of the resolved config;
identical config and seed reproduce byte-identical files.  A JSON config
file (--config) overrides command-line flags key by key.  The environment
variable CAUSALBOUNDS_THREADS caps worker threads for per-divergence jobs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .aggregate import BoundFamily, k_agg, k_agg_auto
from .data import identity_phi, indicator_phi, load_csv, save_csv
from .divergences import DIVERGENCES, get_spec
from .dual_optim import OptimConfig, fit_conditional, fit_marginal
from .nuisance import fit_propensity
from .oracles import (
    DiscreteLaw,
    confounded_binary_laws,
    exact_divergence,
    primal_oracle,
    scm_ground_truth,
)
from .dual_optim import dual_value_minimize
from .simulate import (
    SyntheticSCM,
    evaluate_run,
    generate,
    inject_propensity_noise,
)

__all__ = ["main", "build_parser"]

REPORT_FORMAT = "causalbounds-report/1"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CAUSALBOUNDS_THREADS", "1")))
    except ValueError:
        return 1


def _config_hash(cfg: dict) -> str:
    # output paths do not affect the analysis, so they do not enter the hash
    core = {k: v for k, v in cfg.items() if k not in ("out", "plot_csv", "out_dir")}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        unknown = set(overrides) - set(cfg)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        cfg.update(overrides)
    return cfg


def _parse_phi(spec_str: str):
    if spec_str == "identity":
        return identity_phi
    if spec_str.startswith("indicator:"):
        return indicator_phi(float(spec_str.split(":", 1)[1]))
    raise SystemExit(f"unknown phi {spec_str!r}; use identity or indicator:<threshold>")


def _parse_divergences(spec_str: str):
    names = [s.strip() for s in spec_str.split(",") if s.strip()]
    if not names:
        raise SystemExit("empty divergence set")
    for name in names:
        if name not in DIVERGENCES:
            raise SystemExit(f"unknown divergence {name!r}; choose from {sorted(DIVERGENCES)}")
    return names


def _optim_from_cfg(cfg: dict) -> OptimConfig:
    oc = OptimConfig()
    if cfg.get("epochs"):
        oc.epochs = int(cfg["epochs"])
    if cfg.get("patience"):
        oc.patience = int(cfg["patience"])
    return oc


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    scm = SyntheticSCM(d=cfg["d"], seed=cfg["scm_seed"])
    data = generate(scm, cfg["n"], seed=cfg["seed"])
    save_csv(data, cfg["out"])
    return 0


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def _aggregate(lowers, uppers, labels, k_policy: str):
    fam = BoundFamily(tuple(lowers), tuple(uppers), tuple(labels))
    if k_policy == "auto":
        lo, up, k_used, crossed = k_agg_auto(fam)
    else:
        k_used = int(k_policy)
        lo, up = k_agg(fam, k_used)
        crossed = lo > up
    return {"lo": lo, "up": up, "k_used": k_used, "crossed": crossed}


def _marginal_report(data, names, cfg):
    results, tight = {}, {}
    for name in names:
        spec = get_spec(name)
        per_arm = {}
        for direction in ("lower", "upper"):
            _, bounds = fit_marginal(data, spec, direction=direction, seed=cfg["seed"])
            for a, est in bounds.items():
                rec = per_arm.setdefault(str(a), {})
                rec["lo" if direction == "lower" else "up"] = est.value
                rec.setdefault("diagnostics", {})[direction] = est.diagnostics
        results[name] = per_arm
    for a in ("0", "1"):
        tight[a] = _aggregate(
            [results[n][a]["lo"] for n in names],
            [results[n][a]["up"] for n in names],
            names,
            cfg["k"],
        )
    return {"results": results, "tight_kth": tight}


def _conditional_intervals(data, names, eval_X, cfg, optim, propensity=None, debias=True):
    """Fit both directions per divergence; returns per-divergence arrays and
    the fold-averaged e_1 at the evaluation points."""

    def job(pair):
        name, direction = pair
        fit = fit_conditional(
            data,
            get_spec(name),
            direction=direction,
            K=cfg.get("folds", 2),
            optim=optim,
            debias=debias,
            seed=cfg["seed"],
            propensity_method=cfg.get("propensity", "boosted"),
            propensity=propensity,
        )
        res = fit.evaluate(1, eval_X)
        e1 = np.mean([ff.propensity.predict(eval_X, 1) for ff in fit.folds], axis=0)
        history = [ff.history for ff in fit.folds]
        return name, direction, res["value"], e1, history

    jobs = [(n, d) for n in names for d in ("lower", "upper")]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(job, jobs))
    else:
        outs = [job(j) for j in jobs]
    lo, up, hist, e1 = {}, {}, {}, None
    for name, direction, vals, e1_j, history in outs:
        (lo if direction == "lower" else up)[name] = vals
        hist.setdefault(name, {})[direction] = history
        e1 = e1_j
    return lo, up, e1, hist


def _conditional_report(data, names, cfg):
    rng = np.random.default_rng(cfg["seed"] + 777)
    n_eval = min(int(cfg["eval_points"]), data.n)
    eval_idx = rng.choice(data.n, size=n_eval, replace=False)
    eval_X = data.X[eval_idx]
    optim = _optim_from_cfg(cfg)
    lo, up, e1, hist = _conditional_intervals(
        data, names, eval_X, cfg, optim, debias=not cfg.get("no_debias", False)
    )
    points = []
    for i in range(n_eval):
        agg = _aggregate([lo[n][i] for n in names], [up[n][i] for n in names], names, cfg["k"])
        points.append(
            {
                "e1": float(e1[i]),
                "x": [float(v) for v in eval_X[i]],
                "bounds": {n: {"lo": float(lo[n][i]), "up": float(up[n][i])} for n in names},
                "tight_kth": agg,
            }
        )
    if cfg.get("global_k"):
        k_star = max(p["tight_kth"]["k_used"] for p in points)
        for p in points:
            p["tight_kth"] = _aggregate(
                [p["bounds"][n]["lo"] for n in names],
                [p["bounds"][n]["up"] for n in names],
                names,
                str(k_star),
            )
    return {"points": points, "fold_diagnostics": hist}


def _write_plot_csv(path, points, names) -> None:
    order = np.argsort([p["e1"] for p in points], kind="stable")
    with open(path, "w") as fh:
        fh.write("divergence,e1,lo,up\n")
        for name in list(names) + ["tight_kth"]:
            for i in order:
                p = points[int(i)]
                rec = p["tight_kth"] if name == "tight_kth" else p["bounds"][name]
                fh.write(f"{name},{p['e1']:.10g},{rec['lo']:.10g},{rec['up']:.10g}\n")


def cmd_bounds(cfg: dict) -> int:
    phi = _parse_phi(cfg["phi"])
    data = load_csv(cfg["data"], phi=phi)
    names = _parse_divergences(cfg["divergences"])
    if cfg["mode"] == "marginal":
        body = _marginal_report(data, names, cfg)
    elif cfg["mode"] == "conditional":
        body = _conditional_report(data, names, cfg)
        if cfg.get("plot_csv"):
            _write_plot_csv(cfg["plot_csv"], body["points"], names)
    else:
        raise SystemExit(f"unknown mode {cfg['mode']!r}")
    report = {
        "format": REPORT_FORMAT,
        "kind": f"bounds/{cfg['mode']}",
        "config": cfg,
        "config_hash": _config_hash(cfg),
        **body,
    }
    _write_json(cfg["out"], report)
    return 0


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

def _audit_divergence_bound(grid, tamper: bool):
    """Exact D_f <= B_f(e) over binary-U/binary-Y confounded SCMs."""
    rows = []
    worst = -np.inf
    factor = 0.5 if tamper else 1.0
    count = 0
    for pu in grid:
        for a10 in grid:
            for a11 in grid:
                for y10 in grid:
                    for y11 in grid:
                        count += 1
                        obs, intv, e1 = confounded_binary_laws(pu, (a10, a11), (y10, y11), a=1)
                        for name, spec in DIVERGENCES.items():
                            d = exact_divergence(spec, obs, intv).value
                            b = factor * float(spec.radius_fn(e1))
                            viol = d - b
                            worst = max(worst, viol)
                            if viol > 1e-9:
                                rows.append(
                                    {"divergence": name, "pu": pu, "a1_u": [a10, a11],
                                     "y1_u": [y10, y11], "violation": viol}
                                )
    return {"scms": count, "violations": rows, "max_violation": float(worst)}


def _audit_duality(n_instances: int, seed: int):
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    etas = (0.01, 0.1, 0.5)
    while done < n_instances:
        m = int(rng.integers(2, 11))
        p = rng.dirichlet(np.ones(m)) + 1e-3
        p = p / p.sum()
        vals = rng.normal(0.0, 1.0, m)
        law = DiscreteLaw(tuple(np.arange(m, dtype=float)), tuple(p))
        name = list(DIVERGENCES)[done % len(DIVERGENCES)]
        spec = DIVERGENCES[name]
        eta = etas[done % len(etas)]
        prim = primal_oracle(law, vals, spec, eta)
        dual, _, _ = dual_value_minimize(law, vals, spec, eta)
        worst = max(worst, abs(prim - dual))
        done += 1
    return {"instances": done, "max_gap": float(worst)}


def cmd_audit(cfg: dict) -> int:
    grid = [float(v) for v in cfg["grid"].split(",")]
    dpi = _audit_divergence_bound(grid, tamper=cfg.get("tamper", False))
    dual = _audit_duality(cfg["instances"], cfg["seed"])
    ok = dpi["max_violation"] <= 1e-9 and dual["max_gap"] < 1e-4
    report = {
        "format": REPORT_FORMAT,
        "kind": "audit",
        "config": cfg,
        "config_hash": _config_hash(cfg),
        "divergence_bound": dpi,
        "duality": dual,
        "pass": ok,
    }
    _write_json(cfg["out"], report)
    print(f"divergence bound: {dpi['scms']} SCMs, max violation {dpi['max_violation']:.3e}")
    print(f"duality: {dual['instances']} instances, max gap {dual['max_gap']:.3e}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# figure
# ---------------------------------------------------------------------------

def _eval_grid(scm, n_points: int, seed: int):
    rng = np.random.default_rng(seed)
    return rng.uniform(-2.0, 2.0, (n_points, scm.d))


def _fig2a(cfg: dict, out_dir: str):
    scm = SyntheticSCM(d=cfg["d"], seed=cfg["scm_seed"])
    data = generate(scm, cfg["n"], seed=cfg["seed"])
    names = _parse_divergences(cfg["divergences"])
    eval_X = _eval_grid(scm, cfg["eval_points"], cfg["seed"] + 1)
    optim = _optim_from_cfg(cfg)
    lo, up, e1, _ = _conditional_intervals(data, names, eval_X, cfg, optim)
    truth, se = scm_ground_truth(scm, 1, eval_X, mc_draws=cfg["mc_draws"], seed=cfg["seed"] + 2)
    path = os.path.join(out_dir, "fig2a.csv")
    order = np.argsort(e1, kind="stable")
    with open(path, "w") as fh:
        fh.write("divergence,e1,lo,up,truth,truth_se\n")
        for name in names:
            for i in order:
                fh.write(
                    f"{name},{e1[i]:.10g},{lo[name][i]:.10g},{up[name][i]:.10g},"
                    f"{truth[i]:.10g},{se[i]:.10g}\n"
                )
        for i in order:
            fam = BoundFamily(
                tuple(lo[n][i] for n in names), tuple(up[n][i] for n in names), tuple(names)
            )
            alo, aup, _, _ = k_agg_auto(fam)
            fh.write(f"tight_kth,{e1[i]:.10g},{alo:.10g},{aup:.10g},{truth[i]:.10g},{se[i]:.10g}\n")
    return [path]


def _pwidth_once(scm, n, seed, cfg, optim, names, debias, noisy):
    data = generate(scm, n, seed=seed)
    prop = fit_propensity(data, method=cfg.get("propensity", "boosted"), seed=seed)
    if noisy:
        prop = inject_propensity_noise(prop, n, seed=seed, second_param=cfg["noise_second_param"])
    eval_X = _eval_grid(scm, cfg["eval_points"], seed + 5)
    local = dict(cfg)
    local["seed"] = seed
    lo, up, _, _ = _conditional_intervals(data, names, eval_X, local, optim,
                                          propensity=prop, debias=debias)
    fams = [
        k_agg_auto(BoundFamily(tuple(lo[m][i] for m in names), tuple(up[m][i] for m in names)))
        for i in range(len(eval_X))
    ]
    intervals = [(f[0], f[1]) for f in fams]
    truth, _ = scm_ground_truth(scm, 1, eval_X, mc_draws=cfg["mc_draws"], seed=seed + 6)
    rep = evaluate_run(truth, intervals)
    return rep, lo, up


def _fig2b(cfg: dict, out_dir: str):
    scm = SyntheticSCM(d=cfg["d"], seed=cfg["scm_seed"])
    names = _parse_divergences(cfg["divergences"])
    optim = _optim_from_cfg(cfg)
    ns = [int(v) for v in cfg["ns"].split(",")]
    path = os.path.join(out_dir, "fig2b.csv")
    with open(path, "w") as fh:
        fh.write("n,estimator,seed,coverage,width,p_width\n")
        for n in ns:
            for r in range(cfg["reps"]):
                seed = cfg["seed"] + 1000 * r
                for estimator, debias in (("debiased", True), ("plain", False)):
                    rep, _, _ = _pwidth_once(scm, n, seed, cfg, optim, names, debias, noisy=True)
                    fh.write(
                        f"{n},{estimator},{seed},{rep.coverage:.10g},"
                        f"{rep.width:.10g},{rep.p_width:.10g}\n"
                    )
    return [path]


def _fig2c(cfg: dict, out_dir: str):
    scm = SyntheticSCM(d=cfg["d"], seed=cfg["scm_seed"])
    names = _parse_divergences(cfg["divergences"])
    optim = _optim_from_cfg(cfg)
    ns = [int(v) for v in cfg["ns"].split(",")]
    eval_X = _eval_grid(scm, cfg["eval_points"], cfg["seed"] + 5)

    def upper_curve(n, seed, debias, noisy, oracle):
        data = generate(scm, n, seed=seed)
        if oracle:
            prop = scm.oracle_propensity_estimate()
        else:
            prop = fit_propensity(data, method=cfg.get("propensity", "boosted"), seed=seed)
            if noisy:
                prop = inject_propensity_noise(prop, n, seed=seed,
                                               second_param=cfg["noise_second_param"])
        local = dict(cfg)
        local["seed"] = seed
        lo, up, _, _ = _conditional_intervals(data, names, eval_X, local, optim,
                                              propensity=prop, debias=debias)
        return np.mean([up[m] for m in names], axis=0)

    # reference limit: oracle propensity, debiased, at a larger sample
    ref = upper_curve(2 * max(ns), cfg["seed"] + 9999, debias=True, noisy=False, oracle=True)
    path = os.path.join(out_dir, "fig2c.csv")
    with open(path, "w") as fh:
        fh.write("n,estimator,seed,error\n")
        series = (
            ("debiased", True, True, False),
            ("plain", False, True, False),
            ("oracle", True, False, True),
        )
        for n in ns:
            for r in range(cfg["reps"]):
                seed = cfg["seed"] + 1000 * r
                for label, debias, noisy, oracle in series:
                    curve = upper_curve(n, seed, debias, noisy, oracle)
                    err = float(np.mean(np.abs(curve - ref)))
                    fh.write(f"{n},{label},{seed},{err:.10g}\n")
    return [path]


def cmd_figure(cfg: dict) -> int:
    os.makedirs(cfg["out_dir"], exist_ok=True)
    maker = {"fig2a": _fig2a, "fig2b": _fig2b, "fig2c": _fig2c}[cfg["name"]]
    files = maker(cfg, cfg["out_dir"])
    manifest = {
        "format": REPORT_FORMAT,
        "kind": f"figure/{cfg['name']}",
        "config": cfg,
        "config_hash": _config_hash(cfg),
        "files": [os.path.basename(f) for f in files],
    }
    _write_json(os.path.join(cfg["out_dir"], f"{cfg['name']}.json"), manifest)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalbounds")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; keys override flags")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="generate a synthetic dataset CSV")
    common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--scm-seed", dest="scm_seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="compute bound intervals from a dataset CSV")
    common(p)
    p.add_argument("data")
    p.add_argument("--mode", choices=("marginal", "conditional"), default="marginal")
    p.add_argument("--divergences", default=",".join(DIVERGENCES))
    p.add_argument("--phi", default="identity")
    p.add_argument("--k", default="auto", help="aggregation k: 'auto' or an integer")
    p.add_argument("--global-k", dest="global_k", action="store_true",
                   help="use one k across all evaluation points")
    p.add_argument("--folds", type=int, default=2)
    p.add_argument("--epochs", type=int, default=0, help="override dual-net epochs")
    p.add_argument("--patience", type=int, default=0)
    p.add_argument("--eval-points", dest="eval_points", type=int, default=200)
    p.add_argument("--propensity", choices=("boosted", "logistic"), default="boosted")
    p.add_argument("--no-debias", dest="no_debias", action="store_true")
    p.add_argument("--plot-csv", dest="plot_csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("audit", help="run the divergence-bound and duality audits")
    common(p)
    p.add_argument("--grid", default="0.05,0.25,0.5,0.75,0.95")
    p.add_argument("--instances", type=int, default=30)
    p.add_argument("--tamper", action="store_true",
                   help="negative control: halve every radius; the audit must fail")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("figure", help="emit plot-ready figure data files")
    common(p)
    p.add_argument("name", choices=("fig2a", "fig2b", "fig2c"))
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--scm-seed", dest="scm_seed", type=int, default=0)
    p.add_argument("--ns", default="1000,4000")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--divergences", default="ChiSq")
    p.add_argument("--eval-points", dest="eval_points", type=int, default=50)
    p.add_argument("--mc-draws", dest="mc_draws", type=int, default=10_000)
    p.add_argument("--epochs", type=int, default=0)
    p.add_argument("--patience", type=int, default=0)
    p.add_argument("--folds", type=int, default=2)
    p.add_argument("--propensity", choices=("boosted", "logistic"), default="boosted")
    p.add_argument("--noise-second-param", dest="noise_second_param",
                   choices=("sd", "var"), default="sd")
    p.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _resolve_config(args)
    cfg.pop("command", None)
    return args.func(cfg)


if __name__ == "__main__":
    sys.exit(main())
