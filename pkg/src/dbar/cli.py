"""Command-line front end.

Exit codes: 0 when every check passes, 1 on a condition or acceptance
failure, 2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, parse_window
from .coupling import CoupledPair, check_condition2, check_condition3
from .errors import DbarError, UsageError
from .estimator import (
    estimate_dbar,
    fmt,
    geometric_weights,
    marginal_consistency,
    mk_check,
    regen_statistics,
    simulate_replicas,
    write_metric_csv,
)
from .kernel import check_order, common_representation
from .regeneration import perfect_sample
from .rng import TimeKeyedRandomness

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CUMULATIVE_TARGET = 1.0 - 1e-9


class ConditionFailure(DbarError):
    """A chain pair does not satisfy the coupling preconditions (exit 1)."""


def _say(msg: str, stream=None) -> None:
    print(msg, file=stream or sys.stdout)


def _pair(cfg: RunConfig) -> CoupledPair:
    verdict = check_order(cfg.x, cfg.y)
    if not verdict.ok:
        raise ConditionFailure(f"ordering {verdict.status}: {verdict.detail}")
    if common_representation(cfg.x, cfg.y) is None:
        raise ConditionFailure("no common finite representation for this pair")
    pair = CoupledPair(cfg.x, cfg.y, k_hard=cfg.k_hard)
    c2, c3 = check_condition2(pair, cfg.kmax or 256), check_condition3(pair, cfg.kmax or 256)
    if not (c2.ok and c3.ok):
        raise ConditionFailure(f"continuity {c2.status}, mixing {c3.status}: {c3.detail}")
    pair.verify(cfg.kmax or 256)
    return pair


def cmd_check(cfg: RunConfig) -> int:
    order = check_order(cfg.x, cfg.y)
    witness = ""
    if order.witness is not None:
        wx, wy = (w or "<empty>" for w in order.witness)
        witness = f" witness x={wx} y={wy}"
    _say(f"condition1 ordering: {order.status} ({order.detail}){witness}")
    if not order.ok or common_representation(cfg.x, cfg.y) is None:
        reason = "ordering not established" if not order.ok else "no common representation"
        _say(f"condition2 continuity: not evaluated ({reason})")
        _say(f"condition3 mixing: not evaluated ({reason})")
        return EXIT_FAIL
    pair = CoupledPair(cfg.x, cfg.y, k_hard=cfg.k_hard)
    k = cfg.kmax or 256
    c2, c3 = check_condition2(pair, k), check_condition3(pair, k)
    _say(f"condition2 continuity: {c2.status} ({c2.detail})")
    _say(f"condition3 mixing: {c3.status} (prod alpha_k >= {fmt(c3.value)}; {c3.detail})")
    return EXIT_OK if (c2.ok and c3.ok) else EXIT_FAIL


def cmd_decompose(cfg: RunConfig) -> int:
    pair = _pair(cfg)
    n = cfg.kmax + 1
    alpha = pair.envelope.alphas(n)
    lam = np.maximum(np.diff(alpha, prepend=0.0), 0.0)
    cum = np.cumsum(lam)
    hit = np.nonzero(cum >= CUMULATIVE_TARGET)[0]
    last = int(hit[0]) if hit.size else n - 1
    path = cfg.out / "decompose.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "alpha_k", "lambda_k", "cumulative_mass"])
        for k in range(last + 1):
            w.writerow([k, fmt(alpha[k]), fmt(lam[k]), fmt(cum[k])])
    if not hit.size:
        _say(f"note: truncated at kmax={cfg.kmax}; cumulative mass {fmt(cum[-1])}", sys.stderr)
    _say(f"wrote {path} ({last + 1} rows)")
    return EXIT_OK


def cmd_sample(cfg: RunConfig) -> int:
    pair = _pair(cfg)
    m, n = cfg.window
    cfg.out.mkdir(parents=True, exist_ok=True)
    bad = 0
    for r in range(cfg.replicas):
        path = perfect_sample(pair, TimeKeyedRandomness(cfg.seed, r), m, n, cfg.max_backtrack)
        w = path.window()
        x, y, mem, reg = path.x[w], path.y[w], path.memory[w], path.regen[w]
        bad += int(np.count_nonzero(x > y))
        out = cfg.out / f"sample_replica{r}.csv"
        with open(out, "w", newline="") as fh:
            fh.write(f"# seed={cfg.seed},replica={r},window={m}:{n},T={path.backtrack_time}\n")
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(["t", "x_t", "y_t", "L_t", "regen_flag"])
            for i, t in enumerate(range(m, n + 1)):
                cw.writerow([t, int(x[i]), int(y[i]), int(mem[i]), int(reg[i])])
        _say(f"wrote {out} (T={path.backtrack_time})")
    if bad:
        _say(f"error: {bad} symbol pairs (1,0) produced", sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_estimate(cfg: RunConfig) -> int:
    pair = _pair(cfg)
    batch = simulate_replicas(pair, cfg.replicas, cfg.window_length, cfg.seed,
                              start=cfg.window[0], truncation=cfg.truncation)
    report = estimate_dbar(pair, cfg.replicas, cfg.window_length, cfg.seed,
                           truncation=cfg.truncation, floor=cfg.dbar_floor, batch=batch)
    cons = marginal_consistency(pair, cfg.replicas, cfg.window_length, cfg.seed, batch=batch)
    center = cfg.window_length // 2
    mk = mk_check(geometric_weights(cfg.window_length, center), report, "mk_cost_geometric")
    extra = [c.row() for c in cons.checks if c.name.startswith("cell")] + [mk.row()]
    rows = report.rows() + extra
    out = cfg.out / "estimate.csv"
    write_metric_csv(out, rows)
    ok = all(r["pass"] for r in rows if r["pass"] is not None)
    _say(f"dbar empirical {fmt(report.empirical_mismatch)} +- {fmt(report.ci_halfwidth)}, "
         f"theoretical {fmt(report.theoretical_dbar)}: {'pass' if ok else 'FAIL'}")
    _say(f"wrote {out}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_regen_stats(cfg: RunConfig) -> int:
    pair = _pair(cfg)
    m, n = cfg.window
    paths = [perfect_sample(pair, TimeKeyedRandomness(cfg.seed, r), m, n, cfg.max_backtrack)
             for r in range(cfg.replicas)]
    rep = regen_statistics(paths, pair, cfg.truncation)
    out = cfg.out / "regen_stats.csv"
    rows = rep.rows()
    write_metric_csv(out, rows)
    ok = rep.rate_pass and rep.geometric_pass
    _say(f"regeneration rate {fmt(rep.rate_empirical)} vs {fmt(rep.rate_theoretical)}, "
         f"geometric p={fmt(rep.geometric_pvalue)}: {'pass' if ok else 'FAIL'}")
    _say(f"wrote {out}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "decompose": cmd_decompose,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "regen-stats": cmd_regen_stats,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides config)")
    common.add_argument("--replicas", type=int, help="number of independent replicas")
    common.add_argument("--window", help="time window M:N, inclusive (use --window=-M:N for negative M)")
    common.add_argument("--kmax", type=int, help="depth limit for decomposition and checks")
    common.add_argument("--out", type=Path, help="output directory")
    parser = _Parser(prog="dbar", description="Minimal d-bar coupling of ordered binary chains.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, replicas=args.replicas, kmax=args.kmax, out=args.out,
            window=parse_window(args.window) if args.window else None)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        _say(f"usage error: {exc}", sys.stderr)
        return EXIT_USAGE
    except DbarError as exc:
        _say(f"error: {exc}", sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
