"""Monte Carlo certification of the coupling.

Replicas are independent perfect samples (distinct replica ids of the same
seed); confidence intervals are built from replica means because symbols
within one path are dependent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import stats

from .coupling import CoupledPair, lambdas
from .errors import UsageError
from .kernel import ChainSpec, FiniteMarkov, Iid, Renewal
from .regeneration import (
    CoupledPath,
    failed_trial_counts,
    perfect_sample,
    truncated_regen_flags,
)
from .rng import TimeKeyedRandomness

Z95 = 1.959963984540054
DBAR_FLOOR = 1e-3
REGEN_DEPTH = 64


def fmt(v) -> str:
    """Render numbers with 17 significant digits (round-trips doubles)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return format(float(v), ".17g")


# -- single-chain marginals -------------------------------------------------

@dataclass(frozen=True)
class MarginalEstimate:
    value: float
    error_bound: float
    method: str
    stderr: float = 0.0
    bias_at_burn_in: float = 0.0


def _markov_transition(spec: FiniteMarkov) -> np.ndarray:
    d = spec.order
    n = 2 ** d
    P = np.zeros((n, n))
    for s in range(n):
        p1 = spec.table[s]
        P[s, (s << 1) & (n - 1)] += 1.0 - p1
        P[s, ((s << 1) | 1) & (n - 1)] += p1
    return P


def _stationary(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def _renewal_marginal(spec: Renewal, tol: float = 1e-12) -> tuple[float, float]:
    """``1/mu`` with ``mu = 1 + sum_{k>=1} prod_{j<=k} (1 - q_j)``, and its error bound."""
    h = spec.hazard
    q_inf = h.q_inf
    total, surv, k = 1.0, 1.0, 0
    chunk = max(h.settle_index + 1, 256)
    while True:
        q = h.table(k + chunk)[k + 1:]
        prods = surv * np.cumprod(1.0 - q)
        total += float(prods.sum())
        surv = float(prods[-1])
        k += chunk
        # remaining terms are at most surv * (1 - q_inf)^i
        tail = surv * (1.0 - q_inf) / q_inf
        if tail / total ** 2 < tol or surv == 0.0:
            break
    return 1.0 / total, tail / total ** 2


def _bias_after(spec: ChainSpec, burn_in: int, pi1: float) -> float:
    """``|P(X_burn_in = 1) - pi(1)|`` exactly, starting from an all-ones past."""
    if isinstance(spec, Iid):
        return 0.0
    if isinstance(spec, FiniteMarkov):
        P = _markov_transition(spec)
        dist = np.zeros(P.shape[0])
        dist[-1] = 1.0
        dist = dist @ np.linalg.matrix_power(P, burn_in)
        return abs(float(dist @ np.asarray(spec.table)) - pi1)
    h = spec.hazard
    H = h.settle_index + 1
    q = h.table(H)[1:]  # q_1..q_H; states l >= H share q_H = q_inf
    dist = np.zeros(H)
    dist[0] = 1.0
    for _ in range(burn_in):
        ones = dist * q
        nxt = np.zeros(H)
        nxt[0] = ones.sum()
        stay = dist - ones
        nxt[1:] += stay[:-1]
        nxt[-1] += stay[-1]
        dist = nxt
    return abs(float(dist @ q) - pi1)


def _forward_sim(spec: ChainSpec, burn_in: int, length: int, seed: int) -> np.ndarray:
    u = np.random.default_rng(seed).random(burn_in + length).tolist()
    out = [0] * len(u)
    if isinstance(spec, Iid):
        return (np.asarray(u) < spec.p).astype(np.uint8)[burn_in:]
    if isinstance(spec, FiniteMarkov):
        table, mask = spec.table, 2 ** spec.order - 1
        s = mask
        for i, v in enumerate(u):
            b = 1 if v < table[s] else 0
            out[i] = b
            s = ((s << 1) | b) & mask
    else:
        h = spec.hazard
        q = h.table(h.settle_index + 1).tolist()
        top = len(q) - 1
        ell = 1
        for i, v in enumerate(u):
            b = 1 if v < q[min(ell, top)] else 0
            out[i] = b
            ell = 1 if b else ell + 1
    return np.asarray(out[burn_in:], dtype=np.uint8)


def batch_means_stderr(series: np.ndarray, n_batches: int = 50) -> float:
    series = np.asarray(series, dtype=float)
    n_batches = min(n_batches, series.size)
    if n_batches < 2:
        return 0.0
    usable = series.size - series.size % n_batches
    means = series[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def marginal_oracle(spec: ChainSpec, method: Literal["closed_form", "forward_sim"] = "closed_form",
                    *, burn_in: int = 1000, length: int = 10 ** 6, seed: int = 0) -> MarginalEstimate:
    """Stationary ``P(X_0 = 1)``.

    ``closed_form`` is exact for iid and Markov chains and truncates the mean
    renewal gap with a certified geometric tail for renewal chains.
    ``forward_sim`` runs the chain from an all-ones past, drops ``burn_in``
    steps, and reports ``3 * stderr + bias_at_burn_in`` as its error bound.
    """
    if method == "closed_form":
        if isinstance(spec, Iid):
            return MarginalEstimate(spec.p, 0.0, method)
        if isinstance(spec, FiniteMarkov):
            pi = _stationary(_markov_transition(spec))
            return MarginalEstimate(float(pi @ np.asarray(spec.table)), 0.0, method)
        if isinstance(spec, Renewal):
            v, err = _renewal_marginal(spec)
            return MarginalEstimate(v, err, method)
        raise UsageError(f"unsupported chain spec {spec!r}")
    if method == "forward_sim":
        if burn_in < 0 or length < 2:
            raise UsageError("forward_sim needs burn_in >= 0 and length >= 2")
        xs = _forward_sim(spec, burn_in, length, seed)
        se = batch_means_stderr(xs)
        pi1 = marginal_oracle(spec).value
        bias = _bias_after(spec, burn_in, pi1)
        return MarginalEstimate(float(xs.mean()), 3 * se + bias, method, se, bias)
    raise UsageError(f"unknown oracle method {method!r}")


# -- replicated perfect samples ---------------------------------------------

@dataclass
class ReplicaBatch:
    """Per-replica statistics of ``n_replicas`` perfect samples of one window."""

    seed: int
    window_length: int
    mismatch: np.ndarray = field(repr=False)  # (replicas, window) bool
    x_rate: np.ndarray = field(repr=False)
    y_rate: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)  # (replicas, 3) fractions of (0,0), (0,1), (1,1)
    regen_rate: np.ndarray = field(repr=False)
    paths: list[CoupledPath] | None = field(default=None, repr=False)

    @property
    def n_replicas(self) -> int:
        return self.mismatch.shape[0]


def simulate_replicas(pair: CoupledPair, n_replicas: int, window_length: int, seed: int,
                      *, start: int = 0, truncation: int = REGEN_DEPTH,
                      keep_paths: bool = False) -> ReplicaBatch:
    """Perfect samples of ``[start, start + window_length - 1]`` for replicas ``0..n_replicas-1``."""
    if n_replicas < 1 or window_length < 1:
        raise UsageError("need at least one replica and a non-empty window")
    pair.verify()
    W = window_length
    mism = np.zeros((n_replicas, W), dtype=bool)
    xr, yr, rr = np.zeros(n_replicas), np.zeros(n_replicas), np.full(n_replicas, np.nan)
    cells = np.zeros((n_replicas, 3))
    kept = [] if keep_paths else None
    for r in range(n_replicas):
        path = perfect_sample(pair, TimeKeyedRandomness(seed, r), start, start + W - 1)
        w = path.window()
        x, y = path.x[w], path.y[w]
        mism[r] = x != y
        xr[r], yr[r] = x.mean(), y.mean()
        codes = x + y
        cells[r] = np.bincount(codes, minlength=3)[:3] / W
        flags = truncated_regen_flags(path.memory[w], truncation)
        if flags.size:
            rr[r] = flags.mean()
        if kept is not None:
            kept.append(path)
    return ReplicaBatch(seed, W, mism, xr, yr, cells, rr, kept)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class EstimateReport:
    """Empirical d-bar and its certification against the closed-form optimum."""

    n_replicas: int
    window_length: int
    seed: int
    empirical_mismatch: float
    ci_halfwidth: float
    theoretical_dbar: float
    marginal_x: float
    marginal_x_ci: float
    marginal_y: float
    marginal_y_ci: float
    oracle_x: float
    oracle_y: float
    regen_rate_empirical: float
    regen_rate_ci: float
    regen_rate_theoretical: float
    clamp_warning_count: int
    dbar_floor: float
    dbar_pass: bool
    lower_bound_pass: bool
    # kept in memory only; not part of the CSV
    mismatch_matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    _meta = ("n_replicas", "window_length", "seed", "clamp_warning_count", "dbar_floor")

    def rows(self) -> list[dict]:
        rows = [
            {"name": "dbar", "value": self.empirical_mismatch, "ci": self.ci_halfwidth,
             "theoretical": self.theoretical_dbar, "pass": self.dbar_pass},
            {"name": "lower_bound", "value": self.empirical_mismatch + 3 * self.ci_halfwidth,
             "ci": self.ci_halfwidth, "theoretical": self.theoretical_dbar - self.dbar_floor,
             "pass": self.lower_bound_pass},
        ]
        for name, v, ci, th in (("marginal_x", self.marginal_x, self.marginal_x_ci, self.oracle_x),
                                ("marginal_y", self.marginal_y, self.marginal_y_ci, self.oracle_y),
                                ("regen_rate", self.regen_rate_empirical, self.regen_rate_ci,
                                 self.regen_rate_theoretical)):
            rows.append({"name": name, "value": v, "ci": ci, "theoretical": th,
                         "pass": bool(abs(v - th) <= 3 * ci / Z95 + 1e-12)})
        for name in self._meta:
            rows.append({"name": name, "value": getattr(self, name), "ci": None,
                         "theoretical": None, "pass": None})
        return rows

    @property
    def all_pass(self) -> bool:
        return all(r["pass"] for r in self.rows() if r["pass"] is not None)

    def write_csv(self, path) -> None:
        write_metric_csv(path, self.rows())

    @classmethod
    def read_csv(cls, path) -> EstimateReport:
        with open(path, newline="") as fh:
            rows = {r["name"]: r for r in csv.DictReader(fh)}
        f = lambda key, col="value": float(rows[key][col])  # noqa: E731
        b = lambda key: rows[key]["pass"] == "true"  # noqa: E731
        return cls(
            n_replicas=int(rows["n_replicas"]["value"]),
            window_length=int(rows["window_length"]["value"]),
            seed=int(rows["seed"]["value"]),
            empirical_mismatch=f("dbar"), ci_halfwidth=f("dbar", "ci"),
            theoretical_dbar=f("dbar", "theoretical"),
            marginal_x=f("marginal_x"), marginal_x_ci=f("marginal_x", "ci"),
            marginal_y=f("marginal_y"), marginal_y_ci=f("marginal_y", "ci"),
            oracle_x=f("marginal_x", "theoretical"), oracle_y=f("marginal_y", "theoretical"),
            regen_rate_empirical=f("regen_rate"), regen_rate_ci=f("regen_rate", "ci"),
            regen_rate_theoretical=f("regen_rate", "theoretical"),
            clamp_warning_count=int(rows["clamp_warning_count"]["value"]),
            dbar_floor=f("dbar_floor"),
            dbar_pass=b("dbar"), lower_bound_pass=b("lower_bound"),
        )

    def scalars(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "mismatch_matrix"}


def write_metric_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "value", "ci", "theoretical", "pass"])
        for r in rows:
            w.writerow([r["name"], fmt(r["value"]), fmt(r["ci"]), fmt(r["theoretical"]), fmt(r["pass"])])


def truncated_alpha(pair: CoupledPair, depth: int = REGEN_DEPTH) -> float:
    """``prod_{m < depth} alpha_m``: probability of a depth-truncated regeneration."""
    return float(np.prod(pair.envelope.alphas(depth)))


def estimate_dbar(pair: CoupledPair, n_replicas: int, window_length: int, seed: int,
                  *, truncation: int = REGEN_DEPTH, floor: float = DBAR_FLOOR,
                  batch: ReplicaBatch | None = None) -> EstimateReport:
    """Estimate ``P(X_0 != Y_0)`` under the coupling and compare with ``P(Y=1) - P(X=1)``.

    ``dbar_pass`` requires ``|empirical - theoretical| <= max(3 ci, floor)`` and
    ``lower_bound_pass`` requires ``empirical + 3 ci >= theoretical - floor``.
    """
    if batch is None:
        batch = simulate_replicas(pair, n_replicas, window_length, seed, truncation=truncation)
    ox = marginal_oracle(pair.spec_x).value
    oy = marginal_oracle(pair.spec_y).value
    theo = oy - ox
    emp, se = _mean_se(batch.mismatch.mean(axis=1))
    ci = Z95 * se
    mx, sx = _mean_se(batch.x_rate)
    my, sy = _mean_se(batch.y_rate)
    rr, sr = _mean_se(batch.regen_rate)
    return EstimateReport(
        n_replicas=batch.n_replicas, window_length=batch.window_length, seed=batch.seed,
        empirical_mismatch=emp, ci_halfwidth=ci, theoretical_dbar=theo,
        marginal_x=mx, marginal_x_ci=Z95 * sx, marginal_y=my, marginal_y_ci=Z95 * sy,
        oracle_x=ox, oracle_y=oy,
        regen_rate_empirical=rr, regen_rate_ci=Z95 * sr,
        regen_rate_theoretical=truncated_alpha(pair, truncation),
        clamp_warning_count=pair.clamp_count, dbar_floor=floor,
        dbar_pass=bool(abs(emp - theo) <= max(3 * ci, floor)),
        lower_bound_pass=bool(emp + 3 * ci >= theo - floor),
        mismatch_matrix=batch.mismatch,
    )


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    sigma: float
    target: float
    passed: bool

    def row(self) -> dict:
        return {"name": self.name, "value": self.value, "ci": Z95 * self.sigma,
                "theoretical": self.target, "pass": self.passed}


def _check(name: str, value: float, sigma: float, target: float, nsig: float = 3.0) -> Check:
    return Check(name, value, sigma, target, bool(abs(value - target) <= nsig * sigma + 1e-12))


@dataclass
class ConsistencyReport:
    checks: list[Check]

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def marginal_consistency(pair: CoupledPair, n_replicas: int, window_length: int, seed: int,
                         *, batch: ReplicaBatch | None = None,
                         forward_length: int | None = None, burn_in: int = 1000) -> ConsistencyReport:
    """Check coupled-path marginals and joint cells against the single-chain oracles.

    Cells must follow the ordered optimal coupling of the marginals:
    ``(0,0) -> P(Y=0)``, ``(1,1) -> P(X=1)``, ``(0,1) -> P(X=0) - P(Y=0)``.
    With ``forward_length`` the marginals are also compared with independent
    forward simulations of each chain, using the combined standard error.
    """
    if batch is None:
        batch = simulate_replicas(pair, n_replicas, window_length, seed)
    ox = marginal_oracle(pair.spec_x).value
    oy = marginal_oracle(pair.spec_y).value
    checks = []
    for name, rates, target in (("marginal_x", batch.x_rate, ox), ("marginal_y", batch.y_rate, oy)):
        v, se = _mean_se(rates)
        checks.append(_check(name, v, se, target))
    targets = (1.0 - oy, oy - ox, ox)
    for i, name in enumerate(("cell_00", "cell_01", "cell_11")):
        v, se = _mean_se(batch.cells[:, i])
        checks.append(_check(name, v, se, targets[i]))
    if forward_length:
        for k, (name, rates, spec) in enumerate((("forward_x", batch.x_rate, pair.spec_x),
                                                 ("forward_y", batch.y_rate, pair.spec_y))):
            v, se = _mean_se(rates)
            fw = marginal_oracle(spec, "forward_sim", burn_in=burn_in, length=forward_length,
                                 seed=seed * 2 + k + 1)
            checks.append(_check(name, v, math.hypot(se, fw.stderr), fw.value))
    return ConsistencyReport(checks)


# -- Monge-Kantorovich additive cost ----------------------------------------

def geometric_weights(window_length: int, center: int, ratio: float = 0.5) -> np.ndarray:
    """``c_n`` proportional to ``ratio**|n - center|`` on the window, summing to 1."""
    n = np.arange(window_length)
    c = ratio ** np.abs(n - center).astype(float)
    return c / c.sum()


def _check_weights(weights, window_length: int) -> np.ndarray:
    c = np.asarray(weights, dtype=float)
    if c.ndim != 1 or c.size != window_length:
        raise UsageError(f"weights must have one entry per window time ({window_length})")
    if np.any(c < 0) or abs(c.sum() - 1.0) > 1e-9:
        raise UsageError("weights must be non-negative and sum to 1 within 1e-9")
    return c


def mk_cost_replicates(weights, report: EstimateReport) -> np.ndarray:
    """Per-replica additive cost ``sum_n c_n 1{X_n != Y_n}``."""
    if report.mismatch_matrix is None:
        raise UsageError("report carries no per-time mismatch data")
    c = _check_weights(weights, report.mismatch_matrix.shape[1])
    return report.mismatch_matrix.astype(float) @ c


def mk_cost(weights, report: EstimateReport) -> float:
    """``sum_n c_n * P_hat(X_n != Y_n)`` over the window, for normalized weights ``c``."""
    return float(mk_cost_replicates(weights, report).mean())


def mk_check(weights, report: EstimateReport, name: str = "mk_cost") -> Check:
    """Compare the additive cost with the empirical mismatch using the replica spread of the cost."""
    v, se = _mean_se(mk_cost_replicates(weights, report))
    return _check(name, v, se, report.empirical_mismatch)


# -- regeneration statistics ------------------------------------------------

@dataclass
class RegenReport:
    rate_empirical: float
    rate_theoretical: float
    sigma_binomial: float
    sigma_batch: float
    n_flags: int
    trial_counts: np.ndarray = field(repr=False)
    geometric_fit: float = float("nan")
    geometric_pvalue: float = float("nan")

    @property
    def rate_pass(self) -> bool:
        sigma = max(self.sigma_binomial, self.sigma_batch)
        return abs(self.rate_empirical - self.rate_theoretical) <= 3 * sigma + 1e-12

    @property
    def geometric_pass(self) -> bool:
        return self.geometric_pvalue >= 1e-3

    def rows(self) -> list[dict]:
        return [
            {"name": "regen_rate", "value": self.rate_empirical,
             "ci": Z95 * max(self.sigma_binomial, self.sigma_batch),
             "theoretical": self.rate_theoretical, "pass": self.rate_pass},
            {"name": "geometric_fit", "value": self.geometric_fit, "ci": None,
             "theoretical": self.rate_theoretical, "pass": None},
            {"name": "geometric_chi2_pvalue", "value": self.geometric_pvalue, "ci": None,
             "theoretical": 1e-3, "pass": self.geometric_pass},
            {"name": "trial_count_samples", "value": int(self.trial_counts.size), "ci": None,
             "theoretical": None, "pass": None},
        ]


def chi2_binned(observed: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> float:
    """Chi-square p-value of counts over categories ``0..K-1`` against ``probs``.

    Categories with expected count below ``min_expected`` are pooled into one
    extra bin together with the leftover probability ``1 - sum(probs)``.
    """
    observed = np.asarray(observed, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = observed.sum()
    exp = probs * n
    keep = exp >= min_expected
    obs_k, exp_k = observed[keep], exp[keep]
    rest_o = n - obs_k.sum()
    rest_e = n - exp_k.sum()
    if rest_e > 1e-9 * n:
        obs_k, exp_k = np.append(obs_k, rest_o), np.append(exp_k, rest_e)
    elif rest_o > 0:
        return 0.0
    if obs_k.size < 2:
        return 1.0
    return float(stats.chisquare(obs_k, exp_k * (obs_k.sum() / exp_k.sum())).pvalue)


def geometric_gof(counts: np.ndarray, alpha: float) -> float:
    """p-value of trial counts ``k >= 1`` against ``alpha (1 - alpha)^(k-1)``."""
    counts = np.asarray(counts)
    if counts.size == 0:
        return float("nan")
    kmax = int(counts.max())
    k = np.arange(1, kmax + 1)
    probs = alpha * (1.0 - alpha) ** (k - 1)
    observed = np.bincount(counts, minlength=kmax + 1)[1:]
    return chi2_binned(observed, probs)


def regen_statistics(paths: list[CoupledPath], pair: CoupledPair,
                     truncation: int = REGEN_DEPTH) -> RegenReport:
    """Regeneration frequency and failed-trial counts against ``prod_{m<truncation} alpha_m``."""
    flags = [truncated_regen_flags(p.memory, truncation) for p in paths]
    allf = np.concatenate(flags) if flags else np.zeros(0, dtype=bool)
    if allf.size == 0:
        raise UsageError(f"paths are shorter than the truncation depth {truncation}")
    target = truncated_alpha(pair, truncation)
    rate = float(allf.mean())
    counts = np.concatenate([failed_trial_counts(p.memory, truncation) for p in paths])
    return RegenReport(
        rate_empirical=rate, rate_theoretical=target,
        sigma_binomial=math.sqrt(target * (1.0 - target) / allf.size),
        sigma_batch=batch_means_stderr(allf, 100),
        n_flags=int(allf.size), trial_counts=counts,
        geometric_fit=float(1.0 / counts.mean()) if counts.size else float("nan"),
        geometric_pvalue=geometric_gof(counts, target),
    )


def memory_length_gof(pair: CoupledPair, n_draws: int, seed: int, replica: int = 0) -> tuple[float, np.ndarray]:
    """Chi-square p-value of ``n_draws`` memory lengths against ``(lambda_k)``, plus the histogram."""
    mem = pair.memory_lengths(TimeKeyedRandomness(seed, replica).uniforms(0, n_draws - 1))
    hist = np.bincount(mem)
    lam = lambdas(pair, hist.size)
    return chi2_binned(hist, lam), hist
