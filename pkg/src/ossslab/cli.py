"""Command-line front end.

Every subcommand is deterministic given its flags (--seed, with the
OSSSLAB_SEED environment variable as fallback) and prints JSON (or CSV
with --format csv) to stdout or --out.  Exit codes: 0 success, 1 usage or
configuration error, 2 a checked contract was violated (reported as a
finding, not a crash).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dtree, measure, mcmc, osss, sharpness
from .graph import FiniteGraph, GraphError, LatticeSpec, build_box, build_rectangle

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FINDING = 2


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# flag parsing helpers


def _parse_graph(spec: str | None) -> FiniteGraph:
    if spec is None:
        raise UsageError("--graph is required for this command")
    parts = spec.split(":")
    if parts[0] == "box" and len(parts) == 3:
        return build_box(LatticeSpec(parts[1], int(parts[2])))
    if parts[0] == "rect" and len(parts) == 3:
        return build_rectangle(int(parts[1]), int(parts[2]))
    if parts[0] == "file" and len(parts) == 2:
        with open(parts[1]) as fh:
            return FiniteGraph.from_json(fh.read())
    raise UsageError(f"bad graph spec {spec!r} (want box:FAMILY:N, rect:N:K or file:PATH)")


def _parse_measure(g: FiniteGraph, args) -> measure.Measure:
    if getattr(args, "product", False):
        return measure.ProductMeasure(g.n_edges, args.p, graph=g)
    return measure.RandomClusterMeasure(g, q=args.q, beta=args.beta, p=args.p,
                                        boundary=args.boundary)


def _parse_tree(spec: str, g: FiniteGraph) -> dtree.DecisionTree:
    parts = spec.split(":")
    if parts[0] == "fixed":
        return dtree.FixedOrderTree(list(range(g.n_edges)))
    if parts[0] == "reverse":
        return dtree.FixedOrderTree(list(range(g.n_edges - 1, -1, -1)))
    if parts[0] == "hash":
        return dtree.HashRuleTree(g.n_edges, int(parts[1]) if len(parts) > 1 else 0)
    if parts[0] == "exploration":
        k = int(parts[1]) if len(parts) > 1 else (g.radius or 1)
        return dtree.ExplorationTree(g, g.shell(k))
    if parts[0] == "file" and len(parts) == 2:
        with open(parts[1]) as fh:
            return dtree.tree_from_json(fh.read(), graph=g)
    raise UsageError(f"bad tree spec {spec!r}")


def _parse_function(spec: str, g: FiniteGraph) -> dtree.BoolFunction:
    parts = spec.split(":")
    if parts[0] == "connect":
        k = int(parts[1]) if len(parts) > 1 else (g.radius or 1)
        targets = g.shell(k) if g.family else sorted(g.boundary)
        return dtree.ConnectivityIndicator(g, [g.origin], targets)
    if parts[0] == "and":
        return dtree.and_function(g.n_edges)
    if parts[0] == "or":
        return dtree.or_function(g.n_edges)
    if parts[0] == "majority":
        return dtree.majority_function(g.n_edges)
    if parts[0] == "dictator":
        return dtree.dictator_function(g.n_edges, int(parts[1]) if len(parts) > 1 else 0)
    raise UsageError(f"bad function spec {spec!r}")


def _settings(args) -> mcmc.ChainSettings:
    return mcmc.ChainSettings(burnin=args.burnin, thinning=args.thinning,
                              chains=args.chains, seed=args.seed,
                              samples_per_chain=args.samples)


def _emit(payload, args) -> None:
    if args.format == "csv" and isinstance(payload, str):
        text = payload
    elif args.format == "csv":
        raise UsageError("csv output is not available for this command")
    else:
        text = json.dumps(payload, sort_keys=True, indent=2, default=float) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _apply_cap(args) -> None:
    if args.max_exact_edges is not None:
        if not args.ack_exact_cost:
            raise UsageError("--max-exact-edges needs --ack-exact-cost")
        measure.EXACT_EDGE_CAP = args.max_exact_edges


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify_osss(args) -> int:
    g = _parse_graph(args.graph)
    m = _parse_measure(g, args)
    f = _parse_function(args.f, g)
    tree = None if args.variant == "poincare" else _parse_tree(args.tree, g)
    rep = osss.check_osss(m, tree, f, variant=args.variant, force=args.force)
    if args.format == "csv":
        _emit(rep.to_csv(), args)
    else:
        _emit(json.loads(rep.to_json()), args)
    return EXIT_OK if rep.holds else EXIT_FINDING


def cmd_revealment(args) -> int:
    g = _parse_graph(args.graph)
    m = _parse_measure(g, args)
    f = _parse_function(args.f, g)
    tree = _parse_tree(args.tree, g)
    if args.mc:
        rng = np.random.default_rng(args.seed)
        delta = dtree.revealment_mc(m, tree, f, args.mc, rng)
        method = f"monte-carlo({args.mc})"
    else:
        delta = dtree.revealment(m, tree, f)
        method = "exact"
    _emit({"delta": list(map(float, delta)), "method": method}, args)
    return EXIT_OK


def cmd_sample(args) -> int:
    g = _parse_graph(args.graph)
    m = _parse_measure(g, args)
    tree = _parse_tree(args.tree, g)
    rng = np.random.default_rng(args.seed)
    if args.counts:
        counts = dtree.sequential_sample_counts(m, tree, rng, args.n_samples)
        nz = {format(i, f"0{g.n_edges}b")[::-1]: int(c)
              for i, c in enumerate(counts) if c}
        _emit({"n_samples": args.n_samples, "counts": nz}, args)
    else:
        rows = ["".join(map(str, dtree.sequential_sample(m, tree, rng)))
                for _ in range(args.n_samples)]
        _emit({"samples": rows}, args)
    return EXIT_OK


def cmd_exact_law(args) -> int:
    g = _parse_graph(args.graph)
    m = _parse_measure(g, args)
    tree = _parse_tree(args.tree, g)
    law = dtree.sequential_law_exact(m, tree)
    err = float(np.abs(law - m.probabilities()).max())
    _emit({"max_abs_error": err, "tolerance": 1e-12}, args)
    return EXIT_OK if err <= 1e-12 else EXIT_FINDING


def cmd_estimate_theta(args) -> int:
    est = mcmc.estimate_theta(LatticeSpec(args.family, args.n), args.q,
                              _settings(args), beta=args.beta, p=args.p,
                              convention=args.convention)
    _emit({"estimate": est.mean, "half_width": est.half_width_95,
           "n_samples": est.n_samples,
           "settings": {"burnin": args.burnin, "thinning": args.thinning,
                        "chains": args.chains, "seed": args.seed}}, args)
    return EXIT_OK


def cmd_crossing(args) -> int:
    est = mcmc.estimate_crossing(args.n, args.k, args.orientation, args.q,
                                 _settings(args), beta=args.beta, p=args.p,
                                 boundary=args.boundary)
    _emit({"estimate": est.mean, "half_width": est.half_width_95,
           "n_samples": est.n_samples}, args)
    return EXIT_OK


def cmd_sharpness_scan(args) -> int:
    betas = np.round(np.arange(args.beta_min, args.beta_max + 1e-12, args.beta_step), 12)
    sizes = [int(s) for s in args.sizes.split(",")]
    if args.source == "exact":
        grid = sharpness.exact_theta_grid(args.family, args.q, betas, sizes,
                                          convention=args.convention)
    else:
        grid = sharpness.mc_theta_grid(args.family, args.q, betas, sizes,
                                       _settings(args), convention=args.convention)
    code = EXIT_OK
    if args.format == "csv":
        _emit(grid.to_csv(), args)
    else:
        payload = {"betas": grid.betas.tolist(), "sizes": grid.sizes,
                   "theta": grid.values.tolist(),
                   "half_widths": grid.half_widths.tolist(), "source": grid.source}
        if args.check_inequality:
            rep = sharpness.check_differential_inequality(grid)
            payload["differential_inequality"] = rep
            if rep["violations"] and grid.source == "exact":
                code = EXIT_FINDING
        if args.beta1:
            payload["beta1"] = sharpness.beta1_estimate(grid)
        _emit(payload, args)
    return code


def cmd_pc_solve(args) -> int:
    r = sharpness.pc_solve(args.family, args.q)
    _emit({"family": r.family, "q": r.q, "y_c": r.y_c, "p_c": r.p_c,
           "beta_c": r.beta_c, "residual": r.residual}, args)
    return EXIT_OK


def cmd_duality_check(args) -> int:
    if args.graph:
        g = _parse_graph(args.graph)
        rep = mcmc.dual_sample_law_check(g, args.q, args.p)
        _emit(rep, args)
        return EXIT_OK if rep["max_abs_deviation"] <= 1e-10 else EXIT_FINDING
    rep = sharpness.duality_relation_check(args.family, args.q, args.p)
    _emit(rep, args)
    ok = rep["relation_residual"] <= 1e-12 and rep["pc_pair_residual"] <= 1e-12
    return EXIT_OK if ok else EXIT_FINDING


_LEMMA31_FAMILIES = {
    "toy": lambda n, b: min(1.0, math.exp(n * (b - 0.5))),
    "linear": lambda n, b: b,
    "constant": lambda n, b: 1.0,
}


def cmd_lemma31(args) -> int:
    fam = _LEMMA31_FAMILIES.get(args.family_kind)
    if fam is None:
        raise UsageError(f"unknown family kind {args.family_kind!r}")
    betas = np.round(np.arange(args.beta_min, args.beta_max + 1e-12, args.beta_step), 12)
    sizes = [int(s) for s in args.sizes.split(",")]
    try:
        rep = sharpness.lemma31_synthetic_check(fam, betas, sizes)
    except sharpness.Lemma31HypothesisError as exc:
        _emit({"refused": True, "reason": str(exc), "witness": exc.witness}, args)
        return EXIT_FINDING
    _emit({"refused": False, **rep}, args)
    return EXIT_OK


def cmd_potts_identity(args) -> int:
    rep = measure.potts_rc_identity_check(args.family, args.n, args.q, args.beta)
    _emit(rep, args)
    return EXIT_OK if rep["abs_difference"] <= 1e-10 else EXIT_FINDING


# ---------------------------------------------------------------------------
# self tests


def _selftest(command: str) -> int:
    """A small canned check per subcommand; exit 0 iff it passes."""
    g4 = build_rectangle(1, 1)
    m4 = measure.RandomClusterMeasure(g4, q=2, p=0.5)
    rng = np.random.default_rng(0)
    ok = True
    if command == "verify-osss":
        f = dtree.ConnectivityIndicator(g4, [g4.vertices[0]], [g4.vertices[3]])
        ok = osss.check_osss(m4, dtree.HashRuleTree(4, 1), f).holds
    elif command == "revealment":
        d = dtree.revealment(m4, dtree.FixedOrderTree([0, 1, 2, 3]),
                             dtree.dictator_function(4, 0))
        ok = d[0] == 1.0 and d[1:].sum() == 0.0
    elif command in ("sample", "exact-law"):
        law = dtree.sequential_law_exact(m4, dtree.HashRuleTree(4, 0))
        ok = float(np.abs(law - m4.probabilities()).max()) < 1e-12
    elif command == "estimate-theta":
        st = mcmc.ChainSettings(burnin=1, thinning=1, chains=4, seed=0,
                                samples_per_chain=2000)
        g1 = build_box(LatticeSpec("square", 1))
        exact = measure.connection_probability(
            measure.ProductMeasure(4, 0.5, graph=g1), [g1.origin], g1.shell(1))
        est = mcmc.estimate_theta(LatticeSpec("square", 1), 1, st, p=0.5)
        ok = est.compatible_with(exact, widths=4)
    elif command == "crossing":
        st = mcmc.ChainSettings(burnin=1, thinning=1, chains=4, seed=0,
                                samples_per_chain=2000)
        est = mcmc.estimate_crossing(1, 2, "vertical", 1, st, p=0.5)
        ok = est.compatible_with(0.5, widths=4)
    elif command == "sharpness-scan":
        grid = sharpness.exact_theta_grid("square", 1, [0.3, 0.4, 0.5], [1])
        ok = sharpness.check_differential_inequality(grid)["violations"] == 0
    elif command == "pc-solve":
        ok = abs(sharpness.pc_solve("square", 2).p_c
                 - math.sqrt(2) / (1 + math.sqrt(2))) < 1e-12
    elif command == "duality-check":
        ok = mcmc.dual_sample_law_check(g4, 2, 0.5)["max_abs_deviation"] <= 1e-10
    elif command == "lemma31":
        try:
            sharpness.lemma31_synthetic_check(_LEMMA31_FAMILIES["constant"],
                                              np.arange(0, 1.01, 0.05), [1, 2, 4, 8])
            ok = False
        except sharpness.Lemma31HypothesisError:
            ok = True
    elif command == "potts-identity":
        rep = measure.potts_rc_identity_check("square", 1, 2, 0.6)
        ok = rep["abs_difference"] <= 1e-10
    print("selftest", command, "ok" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FINDING


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p, mc=False, graph=False, measure_flags=False, tree=False, f=False):
    p.add_argument("--seed", type=int,
                   default=int(os.environ.get("OSSSLAB_SEED", "0")))
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1,
                   help="parallelism cap (single-threaded build: accepted, unused)")
    p.add_argument("--max-exact-edges", type=int, default=None)
    p.add_argument("--ack-exact-cost", action="store_true")
    p.add_argument("--selftest", action="store_true")
    if graph:
        p.add_argument("--graph", required=False, default=None)
    if measure_flags:
        p.add_argument("--q", type=float, default=1.0)
        p.add_argument("--p", type=float, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--boundary", choices=["free", "wired"], default="free")
        p.add_argument("--product", action="store_true",
                       help="use the product measure at --p instead of random-cluster")
    if tree:
        p.add_argument("--tree", default="fixed")
    if f:
        p.add_argument("--f", default="connect")
    if mc:
        p.add_argument("--burnin", type=int, default=1000)
        p.add_argument("--thinning", type=int, default=10)
        p.add_argument("--chains", type=int, default=8)
        p.add_argument("--samples", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ossslab")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-osss")
    _add_common(p, graph=True, measure_flags=True, tree=True, f=True)
    p.add_argument("--variant", choices=["covariance", "influence", "poincare"],
                   default="covariance")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_verify_osss)

    p = sub.add_parser("revealment")
    _add_common(p, graph=True, measure_flags=True, tree=True, f=True)
    p.add_argument("--mc", type=int, default=None)
    p.set_defaults(fn=cmd_revealment)

    p = sub.add_parser("sample")
    _add_common(p, graph=True, measure_flags=True, tree=True)
    p.add_argument("--n-samples", type=int, default=10)
    p.add_argument("--counts", action="store_true")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("exact-law")
    _add_common(p, graph=True, measure_flags=True, tree=True)
    p.set_defaults(fn=cmd_exact_law)

    p = sub.add_parser("estimate-theta")
    _add_common(p, mc=True, measure_flags=True)
    p.add_argument("--family", default="square")
    p.add_argument("--n", type=int, required=False, default=1)
    p.add_argument("--convention", choices=["doubled", "plain"], default="doubled")
    p.set_defaults(fn=cmd_estimate_theta)

    p = sub.add_parser("crossing")
    _add_common(p, mc=True, measure_flags=True)
    p.add_argument("--n", type=int, required=False, default=2)
    p.add_argument("--k", type=int, required=False, default=1)
    p.add_argument("--orientation", choices=["horizontal", "vertical"],
                   default="vertical")
    p.set_defaults(fn=cmd_crossing)

    p = sub.add_parser("sharpness-scan")
    _add_common(p, mc=True, measure_flags=True)
    p.add_argument("--family", default="square")
    p.add_argument("--source", choices=["exact", "monte-carlo"], default="exact")
    p.add_argument("--convention", choices=["doubled", "plain"], default="doubled")
    p.add_argument("--beta-min", type=float, default=0.1)
    p.add_argument("--beta-max", type=float, default=1.0)
    p.add_argument("--beta-step", type=float, default=0.05)
    p.add_argument("--sizes", default="1")
    p.add_argument("--check-inequality", action="store_true")
    p.add_argument("--beta1", action="store_true")
    p.set_defaults(fn=cmd_sharpness_scan)

    p = sub.add_parser("pc-solve")
    _add_common(p)
    p.add_argument("--family", required=False, default="square")
    p.add_argument("--q", type=float, default=1.0)
    p.set_defaults(fn=cmd_pc_solve)

    p = sub.add_parser("duality-check")
    _add_common(p, graph=True)
    p.add_argument("--family", default="square")
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--p", type=float, default=0.5)
    p.set_defaults(fn=cmd_duality_check)

    p = sub.add_parser("lemma31")
    _add_common(p)
    p.add_argument("--family-kind", choices=sorted(_LEMMA31_FAMILIES), default="toy")
    p.add_argument("--beta-min", type=float, default=0.0)
    p.add_argument("--beta-max", type=float, default=1.0)
    p.add_argument("--beta-step", type=float, default=0.02)
    p.add_argument("--sizes", default="1,2,4,8,16,32,64,128,256,512,1024")
    p.set_defaults(fn=cmd_lemma31)

    p = sub.add_parser("potts-identity")
    _add_common(p)
    p.add_argument("--family", default="square")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--beta", type=float, default=0.6)
    p.set_defaults(fn=cmd_potts_identity)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.selftest:
            return _selftest(args.command)
        _apply_cap(args)
        return args.fn(args)
    except (UsageError, GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
