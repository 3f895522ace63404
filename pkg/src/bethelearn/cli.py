"""Command-line interface.

Commands: infer, learn, classify, scan, figure1.  Outputs are deterministic
for a fixed flag set and seed: CSV files carry their configuration as
'#'-prefixed comment lines (including the seed) and contain no timestamps.

Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .exceptions import InputError, NonConvergenceError, NumericalError
from .graphs import build_graph
from .inference import BPOptions, multi_restart_bp, exact_inference
from .learnability import classify, classify_grid
from .learning import (
    LearnOptions,
    ThetaGrid,
    figure1_search,
    homogeneous_region_grid,
    learn_subgradient,
    moment_matching_check,
)
from .model import (
    homogeneous_marginals,
    load_marginals,
    load_model,
    minimal_to_table,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_NONCONVERGENCE = 4

SCAN_HEADER = "mu_v,mu_e,lemma3,lemma2,lemma1,inner,empirical_match,verdict,residual"

_DEFAULTS = {
    "resolution": 0.01,
    "mu_resolution": 0.002,
    "restarts": 20,
    "damping": 0.5,
    "tol": 1e-10,
    "max_iter": 10000,
    "seed": 0,
    "match_tol": 0.01,
    "workers": 1,
    "learn_iters": 500,
    "step0": 0.1,
    "schedule": "inv_sqrt",
    "warm_start": True,
    "exact": False,
    "empirical": False,
    "graph": None,
    "homogeneous": None,
    "marginals": None,
    "model": None,
    "out": None,
    "plot": None,
}

_CASTS = {
    "resolution": float, "mu_resolution": float, "restarts": int, "damping": float,
    "tol": float, "max_iter": int, "seed": int, "match_tol": float, "workers": int,
    "learn_iters": int, "step0": float, "schedule": str, "warm_start": bool,
    "exact": bool, "empirical": bool, "graph": str, "homogeneous": str,
    "marginals": str, "model": str, "out": str, "plot": str,
}


def _build_parser():
    top = argparse.ArgumentParser(prog="bethelearn", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file mirroring the flags")
        p.add_argument("--graph", help="torus:RxC | cycle:N | chain:N | complete:N | file:PATH")
        p.add_argument("--homogeneous", metavar="MU_V,MU_E",
                       help="homogeneous marginals (node, edge)")
        p.add_argument("--marginals", help="JSON marginals file (minimal form)")
        p.add_argument("--restarts", type=int, help="BP restarts (default 20)")
        p.add_argument("--damping", type=float, help="BP damping in [0,1) (default 0.5)")
        p.add_argument("--tol", type=float, help="BP convergence tolerance (default 1e-10)")
        p.add_argument("--max-iter", dest="max_iter", type=int,
                       help="BP sweep budget (default 10000)")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--match-tol", dest="match_tol", type=float,
                       help="moment-matching tolerance (default 0.01)")
        p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("infer", help="run BP and report beliefs and free energy")
    common(p)
    p.add_argument("--model", help="JSON model file (graph + potentials)")
    p.add_argument("--exact", action="store_true", default=None,
                   help="also run exhaustive enumeration (N_V <= 24)")

    p = sub.add_parser("learn", help="fit parameters to marginals by subgradient ascent")
    common(p)
    p.add_argument("--learn-iters", dest="learn_iters", type=int,
                   help="ascent iteration budget (default 500)")
    p.add_argument("--step0", type=float, help="initial step size (default 0.1)")
    p.add_argument("--schedule", choices=("inv_sqrt", "constant"), help="step schedule")
    p.add_argument("--no-warm-start", dest="warm_start", action="store_false", default=None,
                   help="run a full BP multi-restart at every ascent iterate")

    p = sub.add_parser("classify", help="learnability verdict for one marginal vector")
    common(p)

    p = sub.add_parser("scan", help="classify a homogeneous marginal grid into regions")
    common(p)
    p.add_argument("--resolution", type=float, help="marginal grid step (default 0.01)")
    p.add_argument("--empirical", action="store_true", default=None,
                   help="run the moment-matching stage on undecided points")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--plot", help="also render the region map PNG to this path")

    p = sub.add_parser("figure1", help="exhaustive homogeneous fit and maximizer hull")
    common(p)
    p.add_argument("--resolution", type=float, help="(h, J) grid step (default 0.01)")
    p.add_argument("--mu-resolution", dest="mu_resolution", type=float,
                   help="marginal grid step for the inner maximization (default 0.002)")
    p.add_argument("--plot", help="also render the surface PNG to this path")
    return top


def _read_config(path):
    vals = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InputError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key = key.strip().replace("-", "_")
            if key not in _DEFAULTS:
                raise InputError(f"{path}:{lineno}: unknown option {key!r}")
            cast = _CASTS[key]
            value = value.strip()
            if cast is bool:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise InputError(f"{path}:{lineno}: {key} must be true/false")
                vals[key] = value.lower() in ("true", "1")
            else:
                try:
                    vals[key] = cast(value)
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return vals


def _merge(args):
    """flag > config file > default."""
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_read_config(args.config))
    for key in _DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _bp_options(o):
    return BPOptions(max_iter=o["max_iter"], tol=o["tol"], damping=o["damping"])


def _load_graph_arg(o):
    if not o["graph"]:
        raise InputError("missing --graph")
    return build_graph(o["graph"])


def _load_mu(o, graph):
    if o["homogeneous"]:
        try:
            mv, me = (float(x) for x in o["homogeneous"].split(","))
        except ValueError as exc:
            raise InputError(f"bad --homogeneous value {o['homogeneous']!r}: {exc}") from exc
        return homogeneous_marginals(graph, mv, me)
    if o["marginals"]:
        return load_marginals(o["marginals"], graph)
    raise InputError("provide marginals via --homogeneous or --marginals")


def _write_text(path, text):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_report(obj, path):
    _write_text(path, json.dumps(obj, indent=2) + "\n")


def _fmt_grid(v):
    return format(round(v, 12), "g")


def _fmt(v, digits=".10g"):
    return "" if v is None else format(v, digits)


def _meta_lines(command, o, keys):
    lines = [f"# bethelearn {command}"]
    for k in keys:
        lines.append(f"# {k.replace('_', '-')}: {o[k]}")
    return lines


def cmd_infer(o):
    if not o["model"]:
        raise InputError("infer requires --model")
    graph, theta = load_model(o["model"])
    mr = multi_restart_bp(theta, graph, n_restarts=o["restarts"], seed=o["seed"],
                          opts=_bp_options(o))
    report = {
        "command": "infer",
        "graph": {"num_nodes": graph.num_nodes, "num_edges": graph.num_edges},
        "runs": {
            "total": int(len(mr.run_converged)),
            "converged": int(mr.run_converged.sum()),
            "residuals": [float(r) for r in mr.run_residuals],
        },
    }
    if not mr.fixed_points:
        report["error"] = "no BP fixed point found; increase damping or max-iter"
        _json_report(report, o["out"])
        raise NonConvergenceError("no BP run converged; increase damping or max-iter")
    best = mr.fixed_points[0]
    report["bethe_log_partition"] = best.free_energy
    report["bethe_log_partition_note"] = (
        "approximate: maximum Bethe free energy over the BP fixed points found"
    )
    report["fixed_points"] = [
        {"free_energy": fp.free_energy, "restart_index": fp.restart_index,
         "iterations": fp.result.iterations}
        for fp in mr.fixed_points
    ]
    report["beliefs"] = {
        "mu_node": best.beliefs.mu_node.tolist(),
        "mu_edge": best.beliefs.mu_edge.tolist(),
    }
    if o["exact"]:
        ex = exact_inference(theta, graph)
        report["exact"] = {
            "log_partition": ex.log_partition,
            "mu_node": ex.marginals.mu_node.tolist(),
            "mu_edge": ex.marginals.mu_edge.tolist(),
        }
    _json_report(report, o["out"])
    return EXIT_OK


def cmd_learn(o):
    graph = _load_graph_arg(o)
    mu = _load_mu(o, graph)
    opts = LearnOptions(
        step0=o["step0"], schedule=o["schedule"], max_iter=o["learn_iters"],
        match_tol=o["match_tol"], bp_opts=_bp_options(o), warm_start=o["warm_start"],
        n_restarts=o["restarts"], seed=o["seed"],
    )
    trace = learn_subgradient(mu, graph, opts)
    check = moment_matching_check(trace.final_theta, mu, graph, tol=o["match_tol"],
                                  n_restarts=o["restarts"], seed=o["seed"],
                                  opts=_bp_options(o))
    report = {
        "command": "learn",
        "status": trace.status,
        "iterations": len(trace.records),
        "final_residual": trace.final_residual,
        "moment_match": {
            "matched": check.matched,
            "residual": check.residual,
            "top_multiplicity": check.top_multiplicity,
        },
        "theta": {
            "theta_node": trace.final_theta.theta_node.tolist(),
            "theta_edge": trace.final_theta.theta_edge.tolist(),
        },
        "trace": [
            {"iteration": t, "likelihood": lb, "residual": r} for t, lb, r in trace.records
        ],
    }
    _json_report(report, o["out"])
    return EXIT_OK


def _verdict_report(verdict):
    ev = {}
    if verdict.lemma3_lhs is not None:
        ev["lemma3_lhs"] = verdict.lemma3_lhs
    if verdict.max_eigenvalue is not None:
        ev["max_eigenvalue"] = verdict.max_eigenvalue
    if verdict.spectral_radius is not None:
        ev["spectral_radius"] = verdict.spectral_radius
    if verdict.reference_free_energy is not None:
        ev["reference_free_energy"] = verdict.reference_free_energy
        ev["witnesses"] = [
            {"free_energy": f, "restart_index": i} for f, i in verdict.witnesses
        ]
    if verdict.matching_residual is not None:
        ev["matching_residual"] = verdict.matching_residual
    return ev


def cmd_classify(o):
    graph = _load_graph_arg(o)
    mu = _load_mu(o, graph)
    verdict = classify(
        mu, graph, empirical=True, n_restarts=o["restarts"], seed=o["seed"],
        bp_opts=_bp_options(o), match_tol=o["match_tol"],
    )
    report = {
        "command": "classify",
        "verdict": verdict.status.value,
        "tests": {k: verdict.flag(k) for k in
                  ("lemma3", "lemma2", "inner", "lemma1", "empirical_match")},
        "evidence": _verdict_report(verdict),
    }
    _json_report(report, o["out"])
    return EXIT_OK


def _scan_grid(resolution):
    """Interior grid points of the homogeneous region (strictly positive
    table entries) in row-major (mu_v, mu_e) order."""
    _, mv, me, _ = homogeneous_region_grid(resolution)
    eps = 0.4 * resolution
    keep = (
        (mv > eps) & (mv < 1.0 - eps) & (me > eps)
        & (mv - me > eps) & (1.0 - 2.0 * mv + me > eps)
    )
    return [(float(a), float(b)) for a, b in zip(mv[keep], me[keep])]


def _scan_shard(task):
    pts, graph, o = task
    mus = [homogeneous_marginals(graph, mv, me) for mv, me in pts]
    verdicts = classify_grid(
        mus, graph, empirical=o["empirical"], n_restarts=o["restarts"], seed=o["seed"],
        bp_opts=_bp_options(o), match_tol=o["match_tol"],
    )
    return [
        (
            mv, me,
            v.flag("lemma3"), v.flag("lemma2"), v.flag("lemma1"),
            v.flag("inner"), v.flag("empirical_match"),
            v.status.value, v.matching_residual,
        )
        for (mv, me), v in zip(pts, verdicts)
    ]


def cmd_scan(o):
    graph = _load_graph_arg(o)
    if not 0.0 < o["resolution"] <= 0.05:
        raise InputError(f"scan resolution must lie in (0, 0.05], got {o['resolution']}")
    pts = _scan_grid(o["resolution"])
    workers = max(1, min(o["workers"], len(pts)))
    if workers > 1:
        shards = [pts[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_scan_shard, [(s, graph, o) for s in shards]))
        by_pt = {}
        for part in parts:
            for row in part:
                by_pt[(row[0], row[1])] = row
        rows = [by_pt[pt] for pt in pts]
    else:
        rows = _scan_shard((pts, graph, o))
    lines = _meta_lines("scan", o, ("graph", "resolution", "seed", "restarts", "damping",
                                    "tol", "max_iter", "match_tol", "empirical"))
    lines.append(SCAN_HEADER)
    for mv, me, l3, l2, l1, inner, emp, verdict, residual in rows:
        lines.append(
            f"{_fmt_grid(mv)},{_fmt_grid(me)},{l3},{l2},{l1},{inner},{emp},"
            f"{verdict},{_fmt(residual)}"
        )
    _write_text(o["out"], "\n".join(lines) + "\n")
    if o["plot"]:
        from .plotting import render_scan_map
        render_scan_map([(r[0], r[1], r[7]) for r in rows], o["plot"],
                        title=f"learnability regions: {o['graph']}")
    return EXIT_OK


def cmd_figure1(o):
    graph = _load_graph_arg(o)
    mu = _load_mu(o, graph)
    grid = ThetaGrid(resolution=o["resolution"])
    res = figure1_search(mu, graph, theta_grid=grid, mu_resolution=o["mu_resolution"])
    lines = _meta_lines("figure1", o, ("graph", "homogeneous", "resolution",
                                       "mu_resolution", "seed"))
    lines.append(f"# h-range: {grid.h_min},{grid.h_max}")
    lines.append(f"# j-range: {grid.j_min},{grid.j_max}")
    lines.append(f"# theta-B-h: {_fmt(res.theta_b[0])}")
    lines.append(f"# theta-B-J: {_fmt(res.theta_b[1])}")
    lines.append(f"# F-max: {_fmt(res.f_max, '.12g')}")
    lines.append(f"# F-at-mu: {_fmt(res.f_at_mu, '.12g')}")
    lines.append(f"# hull-contains-mu: {str(res.hull_contains_mu).lower()}")
    lines.append(f"# hull-distance: {_fmt(res.hull_dist)}")
    for mv, me, f in res.maximizers:
        lines.append(f"# maximizer: {_fmt_grid(mv)},{_fmt_grid(me)},{_fmt(f, '.12g')}")
    lines.append("mu_v,mu_e,F")
    mv, me, F = res.surface
    for a, b, f in zip(mv, me, F):
        lines.append(f"{_fmt_grid(a)},{_fmt_grid(b)},{_fmt(float(f), '.12g')}")
    _write_text(o["out"], "\n".join(lines) + "\n")
    if o["plot"]:
        from .plotting import render_surface
        target = (float(mu.mu_node[0]), float(mu.mu_edge[0]))
        render_surface(mv, me, F, o["plot"], maximizers=res.maximizers, target=target,
                       title=f"F surface at theta_B, {o['graph']}")
    return EXIT_OK


_COMMANDS = {
    "infer": cmd_infer,
    "learn": cmd_learn,
    "classify": cmd_classify,
    "scan": cmd_scan,
    "figure1": cmd_figure1,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        o = _merge(args)
        return _COMMANDS[args.command](o)
    except InputError as exc:
        print(f"bethelearn {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"bethelearn {args.command}: i/o error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"bethelearn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NonConvergenceError as exc:
        print(f"bethelearn {args.command}: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
