"""Privacy, convergence and accuracy analytics for the consensus mechanisms."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from .graph import ConvergenceCheck, check_convergence_condition
from .mechanism import (
    ExecutionTrace,
    MechanismParams,
    inject_noise_sequence,
    observe,
    run_execution,
    weighted_mean,
)
from .noise import ClientStreams, laplace_quantile

__all__ = [
    "PrivacyReport",
    "AccuracyReport",
    "CouplingResult",
    "ConvergenceEstimate",
    "epsilon_bound",
    "build_coupled_noise",
    "verify_coupling",
    "density_ratio_log_bound",
    "potential",
    "edge_potential",
    "complete_laplacian",
    "trace_potentials",
    "contraction_check_centralized",
    "accuracy_radius",
    "monte_carlo_accuracy",
    "convergence_estimate",
    "centered_potentials",
    "expected_noise_energy",
    "round0_privacy_histogram",
]

UNDERFLOW = 1e-300


def _kv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Report:
    """Flat key-value serialisation shared by the report dataclasses."""

    def to_row(self) -> dict:
        return {f.name: _kv_value(getattr(self, f.name)) for f in fields(self)
                if f.metadata.get("serialize", True)}

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_row().items())


@dataclass(frozen=True)
class PrivacyReport(_Report):
    epsilon: Optional[float]
    valid: bool
    sigma_min: float
    c: float
    q: float
    delta_note: str = ("inputs differing by delta in one uncompromised client: "
                       "observation probabilities differ by at most a factor exp(epsilon * delta)")


def epsilon_bound(sigma, c: float, q: float) -> PrivacyReport:
    """Privacy level ``q / (c (q + sigma_min - 1))``.

    Only meaningful for ``1 - sigma_min < q < 1`` and ``c > 0``; otherwise the
    report is marked invalid and carries no epsilon.
    """
    s_min = float(np.min(sigma))
    # q + sigma_min > 1 rather than q > 1 - sigma_min: 1 - 0.8 rounds below 0.2.
    valid = c > 0 and q + s_min > 1.0 and q < 1.0
    eps = q / (c * (q + s_min - 1.0)) if valid else None
    return PrivacyReport(eps, valid, s_min, float(c), float(q))


def build_coupled_noise(eta_seq, k: int, delta, sigma_k: float) -> np.ndarray:
    """Shift client `k`'s noise by ``delta * (1 - sigma_k)**t`` in every round."""
    eta_seq = np.array(eta_seq, copy=True)
    T = eta_seq.shape[0]
    if eta_seq.dtype == object:
        d, r = Fraction(delta), 1 - Fraction(float(sigma_k))
        for t in range(T):
            eta_seq[t, k] = eta_seq[t, k] + d * r**t
    else:
        eta_seq[:, k] += delta * (1.0 - sigma_k) ** np.arange(T, dtype=float)
    return eta_seq


def density_ratio_log_bound(delta: float, c: float, q: float, sigma_k: float, T: int) -> float:
    """Partial sum ``sum_{t<T} (|delta|/c) ((1 - sigma_k)/q)**t`` accumulated term by term."""
    if delta == 0:
        return 0.0
    if c == 0:
        return math.inf
    ratio = (1.0 - sigma_k) / q
    total, term = 0.0, abs(delta) / c
    for _ in range(T):
        total += term
        term *= ratio
    return total


@dataclass(frozen=True)
class CouplingResult(_Report):
    k: int
    delta: float
    T: int
    max_observation_gap: float
    max_theta_gap_error: float
    max_other_state_gap: float
    density_ratio_log_bound: float
    epsilon_delta: Optional[float]
    theta_gap_errors: np.ndarray = field(repr=False, default=None, metadata={"serialize": False})


def verify_coupling(theta0, theta0_prime, params: MechanismParams, eta_seq, T: Optional[int] = None,
                    exact: bool = False) -> CouplingResult:
    """Run the execution from `theta0` on `eta_seq` and its image under the
    noise-shifting map from `theta0_prime`, and measure how far apart the two
    observations and states are.

    The two starts must differ in at most one client ``k``; the shift is
    ``delta = theta0[k] - theta0_prime[k]``.
    """
    a = np.asarray(theta0, dtype=float)
    b = np.asarray(theta0_prime, dtype=float)
    if a.shape != b.shape or a.shape != (params.n,):
        raise ValueError("initial states must both have one entry per client")
    diff = np.flatnonzero(a != b)
    if diff.size > 1:
        raise ValueError(f"initial states are not adjacent: they differ at clients {diff.tolist()}")
    k = int(diff[0]) if diff.size else 0
    if diff.size and k in params.compromised:
        raise ValueError(f"client {k} is compromised; its input is not protected")
    delta = float(a[k] - b[k])

    eta_seq = np.asarray(eta_seq, dtype=float)
    if T is not None:
        eta_seq = eta_seq[:T]
    T = eta_seq.shape[0]
    sigma_k = float(params.sigma[k])

    if exact:
        delta_exact = Fraction(a[k]) - Fraction(b[k])
        eta_x = np.vectorize(Fraction, otypes=[object])(eta_seq) if T else eta_seq.astype(object)
        eta_prime = build_coupled_noise(eta_x, k, delta_exact, sigma_k)
    else:
        eta_prime = build_coupled_noise(eta_seq, k, delta, sigma_k)

    tr = inject_noise_sequence(a, params, eta_seq, exact=exact)
    tr_prime = inject_noise_sequence(b, params, eta_prime, exact=exact)
    gap = observe(tr).max_gap(observe(tr_prime))

    th = tr.thetas()
    th_prime = tr_prime.thetas()
    if exact:
        r = 1 - Fraction(sigma_k)
        errs = np.array([float(abs(th[t, k] - th_prime[t, k] - delta_exact * r**t)) for t in range(T + 1)])
        others = np.delete(th - th_prime, k, axis=1)
        other_gap = float(max((abs(v) for v in others.ravel()), default=0))
    else:
        expected = delta * (1.0 - sigma_k) ** np.arange(T + 1, dtype=float)
        errs = np.abs(th[:, k] - th_prime[:, k] - expected)
        others = np.delete(th - th_prime, k, axis=1)
        other_gap = float(np.max(np.abs(others))) if others.size else 0.0

    eps = epsilon_bound(params.sigma, params.c, params.q).epsilon
    return CouplingResult(
        k=k,
        delta=delta,
        T=T,
        max_observation_gap=gap,
        max_theta_gap_error=float(errs.max()),
        max_other_state_gap=other_gap,
        density_ratio_log_bound=density_ratio_log_bound(delta, params.c, params.q, sigma_k, T),
        epsilon_delta=None if eps is None else eps * abs(delta),
        theta_gap_errors=errs,
    )


def complete_laplacian(n: int) -> np.ndarray:
    """``n I - 1 1^T``: diagonal ``n - 1``, off-diagonal ``-1``."""
    return n * np.eye(n) - np.ones((n, n))


def potential(theta, L) -> float:
    """Quadratic disagreement ``theta^T L theta``."""
    theta = np.asarray(theta)
    L = np.asarray(L)
    if theta.dtype == object:
        return sum(theta[i] * sum(L[i, j] * theta[j] for j in range(len(theta)) if L[i, j])
                   for i in range(len(theta)))
    return float(theta @ L @ theta)


def edge_potential(theta, edges) -> float:
    """Sum of squared differences over the given node pairs."""
    theta = np.asarray(theta)
    return sum((theta[i] - theta[j]) ** 2 for i, j in sorted(edges))


def trace_potentials(trace: ExecutionTrace) -> list:
    """``P(t)`` for every state of the trace.

    Exact traces give exact ``Fraction`` values.  For the client-server
    mechanism the complete-graph potential is evaluated as
    ``N * sum((theta - mean)**2)``, which equals ``theta^T L theta``.
    """
    thetas = trace.thetas()
    params = trace.params
    out = []
    for th in thetas:
        if params.graph is None:
            n = len(th)
            if trace.exact:
                s = sum(th)
                out.append(n * sum(v * v for v in th) - s * s)
            else:
                dev = th - th.mean()
                out.append(float(n * np.dot(dev, dev)))
        else:
            out.append(edge_potential(th, params.graph.edges) if trace.exact
                       else potential(th, params.graph.laplacian))
    return out


def contraction_check_centralized(trace: ExecutionTrace) -> float:
    """Largest relative deviation of ``P(t+1) / P(t)`` from ``(1 - sigma)**2``.

    Rounds with ``P(t) < 1e-300`` are skipped; a trace with nothing to check
    gives 0.
    """
    if trace.params.graph is not None:
        raise ValueError("contraction check applies to the client-server mechanism")
    sigma = float(trace.params.sigma[0])
    target = (1.0 - sigma) ** 2
    P = trace_potentials(trace)
    worst = 0.0
    for p0, p1 in zip(P[:-1], P[1:]):
        if p0 < UNDERFLOW:
            continue
        ratio = float(Fraction(p1) / Fraction(p0)) if isinstance(p0, Fraction) else p1 / p0
        worst = max(worst, abs(ratio - target) / target)
    return worst


@dataclass(frozen=True)
class AccuracyReport(_Report):
    b: float
    r: float
    d_tilde: float
    target_mean: Optional[float] = None
    plain_mean: Optional[float] = None
    empirical_fraction: Optional[float] = None
    runs: Optional[int] = None
    mean_drift: Optional[float] = None
    sample_variance: Optional[float] = None
    variance_bound: Optional[float] = None
    drifts: np.ndarray = field(repr=False, default=None, metadata={"serialize": False})


def accuracy_radius(params: MechanismParams, b: float, theta0=None) -> AccuracyReport:
    """Radius ``r`` such that the (weighted) consensus value lands within ``r``
    of the (weighted) initial mean with probability at least ``1 - b``."""
    if not 0 < b < 1:
        raise ValueError(f"b must lie in (0, 1), got {b!r}")
    c, q, n = params.c, params.q, params.n
    if params.graph is None:
        sigma = float(params.sigma[0])
        d_tilde = sigma**2 / n
        r = math.sqrt(2.0) * c * sigma / math.sqrt(b * n * (1.0 - q**2))
    else:
        d_tilde = float(np.sum(params.closed_degrees.astype(float) ** 2) / params.gamma.sum() ** 2)
        r = math.sqrt(2.0 * d_tilde) * c / math.sqrt(b * (1.0 - q**2))
    target = plain = None
    if theta0 is not None:
        target = weighted_mean(np.asarray(theta0, dtype=float), params)
        plain = float(np.mean(theta0))
    return AccuracyReport(b=b, r=r, d_tilde=d_tilde, target_mean=target, plain_mean=plain,
                          variance_bound=2.0 * d_tilde * c**2 / (1.0 - q**2))


def _run_seeds(seed, runs: int) -> list:
    if isinstance(seed, np.random.SeedSequence):
        # Copy first: spawn() advances the parent's child counter.
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    else:
        ss = np.random.SeedSequence(seed)
    return ss.spawn(runs)


def _drift_task(args):
    theta0, params, T, seeds = args
    start = weighted_mean(theta0, params)
    return [weighted_mean(run_execution(theta0, params, T, seed=s).final_theta, params) - start
            for s in seeds]


def _fan_out(task, theta0, params, T, seeds, workers: int) -> list:
    chunks = [seeds[i::max(workers, 1)] for i in range(max(workers, 1))]
    if workers <= 1:
        results = [task((theta0, params, T, seeds))]
        return [v for part in results for v in part]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(task, [(theta0, params, T, ch) for ch in chunks]))
    # Undo the round-robin split so results follow run order.
    out = [None] * len(seeds)
    for w, part in enumerate(parts):
        out[w::workers] = part
    return out


def monte_carlo_accuracy(theta0, params: MechanismParams, T: int, runs: int, b: float, seed=0,
                         workers: int = 1) -> AccuracyReport:
    """Empirical share of runs whose final (weighted) mean lies within the
    analytic radius of the initial one.

    Run ``j`` uses the ``j``-th child of `seed`, so results do not depend on
    `workers`.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    theta0 = np.asarray(theta0, dtype=float)
    rep = accuracy_radius(params, b, theta0)
    drifts = np.array(_fan_out(_drift_task, theta0, params, T, _run_seeds(seed, runs), workers))
    frac = float(np.mean(np.abs(drifts) <= rep.r))
    return AccuracyReport(
        b=b, r=rep.r, d_tilde=rep.d_tilde, target_mean=rep.target_mean, plain_mean=rep.plain_mean,
        empirical_fraction=frac, runs=runs,
        mean_drift=float(np.mean(np.abs(drifts))),
        sample_variance=float(np.var(drifts, ddof=1)) if runs > 1 else 0.0,
        variance_bound=rep.variance_bound,
        drifts=drifts,
    )


def centered_potentials(theta0, params: MechanismParams, eta_seq) -> np.ndarray:
    """``P(t)`` for ``t = 0 .. T`` tracked in a rounding-robust way.

    The state is kept as ``mu * 1 + e`` with ``mu`` the weighted mean, so
    ``P = e^T L e`` keeps full relative precision even after the clients have
    agreed to more digits than a double can hold around ``mu``.  The update is
    algebraically the same as the round rule::

        mu' = mu + w~,   e' = e - D L e + D w - w~ 1

    where ``w~`` is the weighted mean of ``D w``; ``mu`` itself is not needed.
    """
    L = params.topology.laplacian
    d = params.sigma / params.closed_degrees
    idx = params._gather_index
    gamma = params.gamma
    gsum = gamma.sum()
    ei, ej = (np.array(v, dtype=int) for v in zip(*sorted(params.topology.edges))) \
        if params.topology.edges else (np.empty(0, int), np.empty(0, int))
    theta0 = np.asarray(theta0, dtype=float)
    e = theta0 - weighted_mean(theta0, params)
    eta_seq = np.asarray(eta_seq, dtype=float)
    out = np.empty(eta_seq.shape[0] + 1)
    gaps = e[ei] - e[ej]
    out[0] = gaps @ gaps
    for t, eta in enumerate(eta_seq):
        w = np.cumsum(np.append(eta, 0.0)[idx], axis=1)[:, -1]
        e = e - d * (L @ e) + d * w
        # Re-centre every round: rounding residue in the common mode would
        # otherwise pile up and swamp the disagreement.
        e = e - np.dot(gamma, e) / gsum
        gaps = e[ei] - e[ej]
        out[t + 1] = gaps @ gaps
    return out


def expected_noise_energy(params: MechanismParams, T: int) -> np.ndarray:
    """``E[w(t)^T w(t)] = sum_i (|N(i)| + 1) * 2 c^2 q^(2t)`` for ``t < T``."""
    return float(params.closed_degrees.sum()) * 2.0 * params.c**2 * params.q ** (2.0 * np.arange(T))


@dataclass(frozen=True)
class ConvergenceEstimate:
    mean_potential: np.ndarray
    stderr: np.ndarray
    bound_slack: np.ndarray
    bound_violations: tuple
    condition: ConvergenceCheck
    runs: int

    @property
    def bound_holds(self) -> bool:
        return not self.bound_violations


def _potential_task(args):
    theta0, params, T, seeds = args
    return [centered_potentials(theta0, params, ClientStreams(s, params.n).noise(params.schedule, 0, T))
            for s in seeds]


def convergence_estimate(params: MechanismParams, theta0, T: int, runs: int, seed=0,
                         workers: int = 1, n_se: float = 3.0) -> ConvergenceEstimate:
    """Monte Carlo estimate of ``E[P(t)]`` and a per-round check of

        E[P(t+1)] <= (1 - a) E[P(t)] + lambdaN M^2 E[w^T w]

    A round is a violation when the sample mean of
    ``P(t+1) - (1 - a) P(t)`` exceeds the noise term by more than `n_se`
    standard errors.
    """
    cond = check_convergence_condition(params.topology, params.sigma)
    theta0 = np.asarray(theta0, dtype=float)
    P = np.array(_fan_out(_potential_task, theta0, params, T, _run_seeds(seed, runs), workers))
    mean = P.mean(axis=0)
    se = P.std(axis=0, ddof=1) / math.sqrt(runs) if runs > 1 else np.zeros_like(mean)
    noise_term = cond.lambdaN * cond.M**2 * expected_noise_energy(params, T)
    lhs = P[:, 1:] - (1.0 - cond.a) * P[:, :-1]
    lhs_se = lhs.std(axis=0, ddof=1) / math.sqrt(runs) if runs > 1 else np.zeros(T)
    slack = noise_term - lhs.mean(axis=0)
    violations = tuple(int(t) for t in np.flatnonzero(slack < -n_se * lhs_se - 1e-300))
    return ConvergenceEstimate(mean, se, slack, violations, cond, runs)


def round0_privacy_histogram(theta0, theta0_prime, params: MechanismParams, runs: int, bins: int = 20,
                             seed=0, min_count: int = 50) -> dict:
    """Coarse frequency comparison of client ``k``'s first message from two
    adjacent starts.

    Diagnostic only: returns the largest absolute log frequency ratio over
    bins holding at least `min_count` samples on both sides, next to the
    single-round bound ``|delta| / c``.
    """
    a = np.asarray(theta0, dtype=float)
    b = np.asarray(theta0_prime, dtype=float)
    diff = np.flatnonzero(a != b)
    if diff.size != 1:
        raise ValueError("starts must differ in exactly one client")
    k = int(diff[0])
    rng = np.random.default_rng(seed)
    scale = params.schedule.scale_at(0)
    u = rng.random((2, runs)) - 0.5
    u[u == -0.5] = 0.0
    xa = a[k] + scale * laplace_quantile(u[0])
    xb = b[k] + scale * laplace_quantile(u[1])
    edges = np.linspace(min(xa.min(), xb.min()), max(xa.max(), xb.max()), bins + 1)
    ha, _ = np.histogram(xa, edges)
    hb, _ = np.histogram(xb, edges)
    ok = (ha >= min_count) & (hb >= min_count)
    logratio = np.abs(np.log(ha[ok] / hb[ok])) if ok.any() else np.array([0.0])
    return {
        "client": k,
        "max_abs_log_ratio": float(logratio.max()),
        "single_round_bound": abs(a[k] - b[k]) / params.c if params.c else math.inf,
        "bins_used": int(ok.sum()),
    }
