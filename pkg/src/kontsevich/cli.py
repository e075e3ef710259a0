"""Command-line entry point.

Exit codes: 0 success, 1 certification or check failed, 2 argument error,
3 malformed input, 4 weights missing from the cache.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .formality import (
    associativity_report,
    certify_coboundary,
    cup_difference_symbolic,
    evaluate_series,
    fill_cache,
    series_keys,
    star_symbolic,
    uprime_symbolic,
)
from .graph import enumerate_graphs, parse_graph, validate
from .mvf import Multivector
from .pdo import OpSeries, PolyDiffOp, StarSeries
from .weight import DEFAULT_SAMPLES, CacheMiss, WeightCache, compute_weight

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_MALFORMED, EXIT_CACHE = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    d: int | None
    order: int
    samples: int
    seed: int
    cache: str | None
    test_degree: int
    tol: float
    format: str


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return value
    return parse


def _non_negative(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--d", type=_positive(int), help="expected dimension of the inputs")
    common.add_argument("--order", type=_non_negative, default=1, help="truncation order in hbar")
    common.add_argument("--samples", type=_positive(int), default=DEFAULT_SAMPLES)
    common.add_argument("--seed", type=_non_negative, default=0)
    common.add_argument("--cache", help="weight cache JSON file")
    common.add_argument("--test-degree", type=_positive(int), default=3)
    common.add_argument("--tol", type=_positive(float), default=1e-3)
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--fill", action="store_true",
                        help="compute missing weights instead of failing with exit 4")

    parser = _Parser(prog="kontsevich", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("graphs", parents=[common], help="enumerate admissible graphs")
    p.add_argument("n", type=int)
    p.add_argument("m", type=int)
    p.add_argument("edges", type=int, nargs="?", help="edge count (default 2n+m-2)")

    p = sub.add_parser("weight", parents=[common], help="estimate one graph weight")
    p.add_argument("graph", help='canonical encoding, e.g. "1 2 : (1->-1),(1->-2)"')
    p.add_argument("--quadrature", action="store_true", help="prefer deterministic quadrature")

    p = sub.add_parser("star", parents=[common], help="assemble the star product")
    p.add_argument("gamma", help="bivector JSON file or inline JSON")

    p = sub.add_parser("uprime", parents=[common], help="tangent map applied to a multivector")
    p.add_argument("delta")
    p.add_argument("gamma")

    p = sub.add_parser("certify", parents=[common], help="certify the cup difference is exact")
    p.add_argument("alpha")
    p.add_argument("beta")
    p.add_argument("gamma")
    p.add_argument("--general", action="store_true", help="allow [alpha,gamma], [beta,gamma] != 0")
    p.add_argument("--perturb", help="operator JSON added to the order-0 difference")

    p = sub.add_parser("verify-associativity", parents=[common], help="associativity defects")
    p.add_argument("gamma")
    return parser


# -- input helpers ---------------------------------------------------------------

def _load_json(source: str):
    try:
        text = source if source.lstrip().startswith("{") else Path(source).read_text()
        return json.loads(text)
    except OSError as exc:
        raise CliError(EXIT_MALFORMED, f"cannot read {source!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_MALFORMED, f"invalid JSON in {source!r}: {exc}") from None


def _load_multivector(source: str, d: int | None) -> Multivector:
    try:
        mv = Multivector.from_json(_load_json(source))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_MALFORMED, f"malformed multivector {source!r}: {exc}") from None
    if d is not None and mv.d != d:
        raise CliError(EXIT_MALFORMED, f"{source!r} has dimension {mv.d}, expected {d}")
    return mv


def _load_cache(cfg: RunConfig) -> WeightCache:
    if cfg.cache is None:
        return WeightCache()
    try:
        return WeightCache.load(cfg.cache)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_MALFORMED, f"unusable cache {cfg.cache!r}: {exc}") from None


def _prepare(cache: WeightCache, keys, cfg: RunConfig, fill: bool):
    if not fill:
        return
    if fill_cache(cache, keys, cfg.samples, cfg.seed) and cfg.cache:
        cache.save()


def _evaluate(series, cache, cls=OpSeries):
    try:
        return evaluate_series(series, cache, cls)
    except CacheMiss as exc:
        raise CliError(EXIT_CACHE, "missing weights:\n" + "\n".join(exc.missing)) from None


# -- commands ----------------------------------------------------------------------

def cmd_graphs(args, cfg):
    if args.n < 0 or args.m < 0 or (args.edges is not None and args.edges < 0):
        raise CliError(EXIT_USAGE, "n, m and the edge count must be non-negative")
    edges = max(2 * args.n + args.m - 2, 0) if args.edges is None else args.edges
    graphs = enumerate_graphs(args.n, args.m, edges)
    return [g.encode() for g in graphs], "\n".join(g.encode() for g in graphs)


def cmd_weight(args, cfg):
    try:
        g = parse_graph(args.graph)
    except ValueError as exc:
        raise CliError(EXIT_MALFORMED, str(exc)) from None
    problems = validate(g)
    if problems:
        raise CliError(EXIT_MALFORMED, "inadmissible graph: " + "; ".join(problems))
    cache = _load_cache(cfg)
    est = compute_weight(g, cfg.samples, cfg.seed, prefer_quadrature=args.quadrature)
    if cfg.cache:
        cache.put(g, est)
        cache.save()
    text = f"{g.encode()}  W = {est.value:.10g} +- {est.stderr:.3g}  ({est.method})"
    return {"graph": g.encode(), "estimate": est.to_json()}, text


def _series_output(series: OpSeries, bounds, cache):
    lines = [f"hbar^{j}: {c}   (weight error <= {b:.3g})" for j, (c, b) in enumerate(zip(series.coeffs, bounds))]
    data = {"series": series.to_json(), "error_bounds": list(bounds), "cache_fingerprint": cache.fingerprint()}
    return data, "\n".join(lines)


def cmd_star(args, cfg):
    gamma = _load_multivector(args.gamma, cfg.d)
    if gamma.k != 2:
        raise CliError(EXIT_MALFORMED, "gamma must be a bivector")
    cache = _load_cache(cfg)
    symbolic = star_symbolic(gamma, cfg.order)
    _prepare(cache, series_keys(symbolic), cfg, args.fill)
    series, bounds = _evaluate(symbolic, cache, StarSeries)
    return _series_output(series, bounds, cache)


def cmd_uprime(args, cfg):
    delta = _load_multivector(args.delta, cfg.d)
    gamma = _load_multivector(args.gamma, cfg.d)
    if gamma.k != 2 or delta.d != gamma.d:
        raise CliError(EXIT_MALFORMED, "gamma must be a bivector of the same dimension as delta")
    cache = _load_cache(cfg)
    symbolic = uprime_symbolic(delta, gamma, cfg.order)
    _prepare(cache, series_keys(symbolic), cfg, args.fill)
    series, bounds = _evaluate(symbolic, cache)
    return _series_output(series, bounds, cache)


def cmd_certify(args, cfg):
    alpha, beta, gamma = (_load_multivector(s, cfg.d) for s in (args.alpha, args.beta, args.gamma))
    if gamma.k != 2 or not alpha.d == beta.d == gamma.d:
        raise CliError(EXIT_MALFORMED, "need multivectors of one dimension and a bivector gamma")
    cache = _load_cache(cfg)
    diff_sym = cup_difference_symbolic(alpha, beta, gamma, cfg.order)
    star_sym = star_symbolic(gamma, cfg.order)
    _prepare(cache, series_keys(diff_sym + star_sym), cfg, args.fill)
    diff, _ = _evaluate(diff_sym, cache)
    star, _ = _evaluate(star_sym, cache, StarSeries)
    if args.perturb:
        try:
            extra = PolyDiffOp.from_json(_load_json(args.perturb))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(EXIT_MALFORMED, f"malformed operator: {exc}") from None
        if extra.arity != diff.arity or extra.d != diff.d:
            raise CliError(EXIT_MALFORMED, "perturbation must match the difference's arity and dimension")
        diff = OpSeries([diff.coeffs[0] + extra] + diff.coeffs[1:], diff.order)
    try:
        cert = certify_coboundary(diff, star, alpha, beta, gamma, cfg.order, cfg.test_degree,
                                  cfg.tol, general=args.general, cache_fingerprint=cache.fingerprint())
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    verdict = "certified" if cert.certified else "NOT certified"
    text = "\n".join([f"{verdict} (tol {cert.tol:g}, test degree {cert.test_degree})"]
                     + [f"order {j}: residual {r:.3g}" for j, r in enumerate(cert.residuals)]
                     + cert.messages)
    return cert.to_json(), text, (EXIT_OK if cert.certified else EXIT_FAILED)


def cmd_verify_associativity(args, cfg):
    gamma = _load_multivector(args.gamma, cfg.d)
    if gamma.k != 2:
        raise CliError(EXIT_MALFORMED, "gamma must be a bivector")
    cache = _load_cache(cfg)
    _prepare(cache, series_keys(star_symbolic(gamma, cfg.order)), cfg, args.fill)
    try:
        report = associativity_report(gamma, cfg.order, cache, cfg.test_degree)
    except CacheMiss as exc:
        raise CliError(EXIT_CACHE, "missing weights:\n" + "\n".join(exc.missing)) from None
    ok = report.ok(max_bound=cfg.tol)
    data = report.to_json() | {"ok": ok, "cache_fingerprint": cache.fingerprint()}
    text = "\n".join(
        [("associative" if ok else "NOT associative") + f" within propagated error (bound cap {cfg.tol:g})"]
        + [f"order {j}: defect {a:.3g}, bound {b:.3g}"
           for j, (a, b) in enumerate(zip(report.max_defect, report.max_bound))])
    return data, text, (EXIT_OK if ok else EXIT_FAILED)


COMMANDS = {
    "graphs": cmd_graphs,
    "weight": cmd_weight,
    "star": cmd_star,
    "uprime": cmd_uprime,
    "certify": cmd_certify,
    "verify-associativity": cmd_verify_associativity,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = RunConfig(args.command, args.d, args.order, args.samples, args.seed, args.cache,
                    args.test_degree, args.tol, args.format)
    try:
        result = COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"kontsevich {args.command}: {exc}", file=sys.stderr)
        return exc.code
    data, text, code = result if len(result) == 3 else (*result, EXIT_OK)
    if cfg.format == "json":
        print(json.dumps({"config": asdict(cfg), "result": data}, indent=1, sort_keys=True))
    else:
        print(f"# seed {cfg.seed}")
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
