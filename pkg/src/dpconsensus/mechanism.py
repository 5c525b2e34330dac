"""Round semantics of the client-server and the distributed private consensus mechanisms.

Every round each client publishes ``x_i = theta_i + eta_i`` with
``eta_i ~ Lap(c q^t)``.  In the client-server mechanism the server answers
with the mean of all messages; in the distributed mechanism client ``i``
averages the messages of its closed neighbourhood.  Either way the client
then moves a fraction ``sigma_i`` of the way towards its feedback.

An execution is a deterministic function of the initial state and the noise
sequence, so everything here is built on :func:`inject_noise_sequence`;
:func:`run_execution` only supplies seeded noise.

Sums are accumulated left to right in ascending client index, which keeps
traces bit-reproducible.  Passing ``exact=True`` runs the same arithmetic on
``fractions.Fraction`` values (the sampled noise is converted exactly), which
is slow but free of rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

import numpy as np

from .graph import Graph, complete_graph
from .noise import ClientStreams, NoiseSchedule, sample_laplace

__all__ = [
    "MechanismParams",
    "RoundRecord",
    "ExecutionTrace",
    "Observation",
    "run_round_centralized",
    "run_round_distributed",
    "run_round",
    "run_execution",
    "inject_noise_sequence",
    "sample_noise",
    "observe",
    "default_horizon",
    "weighted_mean",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("t", "client", "theta", "eta", "x", "y")


@dataclass(frozen=True)
class MechanismParams:
    """Parameters of one mechanism instance.

    `graph` is ``None`` for the client-server mechanism, whose clients share
    one interpolation coefficient.  `compromised` holds 0-based indices of
    clients whose states the adversary can read (distributed mechanism only).
    """

    sigma: np.ndarray
    schedule: NoiseSchedule
    graph: Optional[Graph] = None
    compromised: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float)).copy()
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "compromised", frozenset(int(i) for i in self.compromised))
        if sigma.ndim != 1 or sigma.size < 1:
            raise ValueError("sigma must be a nonempty vector")
        if not np.all((sigma > 0) & (sigma < 1)):
            raise ValueError(f"every sigma_i must lie in the open interval (0, 1), got {sigma}")
        if self.graph is None:
            if np.any(sigma != sigma[0]):
                raise ValueError("the client-server mechanism needs a single common sigma")
            if self.compromised:
                raise ValueError("compromised clients are only modelled for the distributed mechanism")
        else:
            if sigma.size != self.graph.n:
                raise ValueError(f"sigma has {sigma.size} entries but the graph has {self.graph.n} nodes")
            bad = [i for i in self.compromised if not 0 <= i < self.graph.n]
            if bad:
                raise ValueError(f"compromised indices out of range: {sorted(bad)}")

    @classmethod
    def centralized(cls, n: int, sigma: float, c: float, q: float) -> "MechanismParams":
        return cls(np.full(n, float(sigma)), NoiseSchedule(c, q))

    @classmethod
    def distributed(cls, graph: Graph, sigma, c: float, q: float, compromised=()) -> "MechanismParams":
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (graph.n,))
        return cls(sigma, NoiseSchedule(c, q), graph, frozenset(compromised))

    @property
    def n(self) -> int:
        return self.sigma.size

    @property
    def mode(self) -> str:
        return "centralized" if self.graph is None else "distributed"

    @property
    def c(self) -> float:
        return self.schedule.c

    @property
    def q(self) -> float:
        return self.schedule.q

    @property
    def sigma_min(self) -> float:
        return float(self.sigma.min())

    @property
    def private(self) -> bool:
        """Whether the noise decays slowly enough for the privacy guarantee."""
        return self.c > 0 and self.q + self.sigma_min > 1.0 and self.q < 1.0

    @cached_property
    def topology(self) -> Graph:
        """The communication graph; the complete graph for the client-server mechanism."""
        return complete_graph(self.n) if self.graph is None else self.graph

    @cached_property
    def closed_degrees(self) -> np.ndarray:
        """``|N(i)| + 1`` per client."""
        return self.topology.degrees + 1

    @cached_property
    def gamma(self) -> np.ndarray:
        """Consensus weights ``(|N(i)| + 1) / sigma_i``."""
        return self.closed_degrees / self.sigma

    @cached_property
    def _gather_index(self) -> np.ndarray:
        # Closed neighbourhoods, ascending, padded with index n (a zero slot).
        hoods = self.topology.closed_neighborhoods
        width = max(len(h) for h in hoods)
        idx = np.full((self.n, width), self.n, dtype=int)
        for i, h in enumerate(hoods):
            idx[i, : len(h)] = h
        return idx


@dataclass(frozen=True)
class RoundRecord:
    """States at the start of round `t`, the noise, the messages and the feedback.

    `y` is the server's scalar state in the client-server mechanism and the
    vector of local averages in the distributed one.
    """

    t: int
    theta: np.ndarray
    eta: np.ndarray
    x: np.ndarray
    y: object


@dataclass(frozen=True)
class Observation:
    """What the adversary sees: all messages, all feedback, compromised states.

    ``compromised_theta_seq`` has one row per state ``theta(0) .. theta(T)`` and
    one column per compromised client (in ascending index order).
    """

    x_seq: np.ndarray
    y_seq: np.ndarray
    compromised: tuple
    compromised_theta_seq: np.ndarray

    def max_gap(self, other: "Observation") -> float:
        """Sup-norm distance between two observations of equal shape."""
        if self.compromised != other.compromised or self.x_seq.shape != other.x_seq.shape:
            raise ValueError("observations are not comparable")
        gaps = [0.0]
        for a, b in (
            (self.x_seq, other.x_seq),
            (self.y_seq, other.y_seq),
            (self.compromised_theta_seq, other.compromised_theta_seq),
        ):
            if np.size(a):
                gaps.append(float(np.max(np.abs(_to_float(np.asarray(a) - np.asarray(b))))))
        return max(gaps)

    def to_csv(self, fh=None) -> str:
        """Write rows ``t, client, theta, eta, x, y``; `theta`/`eta` are blank
        for clients whose state the adversary cannot read."""
        comp = {i: col for col, i in enumerate(self.compromised)}
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        T, n = self.x_seq.shape
        for t in range(T):
            for i in range(n):
                x = self.x_seq[t, i]
                y = self.y_seq[t] if self.y_seq.ndim == 1 else self.y_seq[t, i]
                if i in comp:
                    th = self.compromised_theta_seq[t, comp[i]]
                    w.writerow([t, i + 1, _num(th), _num(x - th), _num(x), _num(y)])
                else:
                    w.writerow([t, i + 1, "", "", _num(x), _num(y)])
        return out.getvalue() if fh is None else ""


@dataclass(frozen=True)
class ExecutionTrace:
    params: MechanismParams
    theta0: np.ndarray
    rounds: tuple
    final_theta: np.ndarray

    @property
    def T(self) -> int:
        return len(self.rounds)

    @property
    def exact(self) -> bool:
        return self.theta0.dtype == object

    def thetas(self) -> np.ndarray:
        """States ``theta(0) .. theta(T)``, shape ``(T + 1, n)``."""
        return np.array([r.theta for r in self.rounds] + [self.final_theta], dtype=self.theta0.dtype)

    def etas(self) -> np.ndarray:
        return self._stack("eta")

    def xs(self) -> np.ndarray:
        return self._stack("x")

    def ys(self) -> np.ndarray:
        if not self.rounds:
            shape = (0,) if self.params.graph is None else (0, self.params.n)
            return np.empty(shape, dtype=self.theta0.dtype)
        return np.array([r.y for r in self.rounds], dtype=self.theta0.dtype)

    def _stack(self, name) -> np.ndarray:
        if not self.rounds:
            return np.empty((0, self.params.n), dtype=self.theta0.dtype)
        return np.array([getattr(r, name) for r in self.rounds], dtype=self.theta0.dtype)

    def to_csv(self, fh=None) -> str:
        """Write one row per (round, client): ``t, client, theta, eta, x, y``.

        Clients are numbered from 1.  For the distributed mechanism `y` is the
        client's own local average.
        """
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rounds:
            for i in range(self.params.n):
                y = r.y if self.params.graph is None else r.y[i]
                w.writerow([r.t, i + 1, _num(r.theta[i]), _num(r.eta[i]), _num(r.x[i]), _num(y)])
        return out.getvalue() if fh is None else ""


def _num(v) -> str:
    return repr(float(v))


def _to_float(a) -> np.ndarray:
    return np.asarray(a, dtype=float) if np.asarray(a).dtype != object else np.vectorize(float, otypes=[float])(a)


def _exact(values) -> np.ndarray:
    return np.array([v if isinstance(v, Fraction) else Fraction(float(v)) for v in np.ravel(values)],
                    dtype=object).reshape(np.shape(values))


def _prepare(values, exact: bool) -> np.ndarray:
    if exact:
        return _exact(values)
    arr = np.asarray(values)
    if arr.dtype == object:
        arr = _to_float(arr)
    return np.array(arr, dtype=float)


def _ordered_sum(x: np.ndarray):
    # np.cumsum accumulates strictly left to right (unlike np.sum).
    return np.cumsum(x)[-1]


def _server_feedback(x: np.ndarray):
    return _ordered_sum(x) / x.size


def _local_feedback(x: np.ndarray, params: MechanismParams) -> np.ndarray:
    zero = Fraction(0) if x.dtype == object else 0.0
    padded = np.append(x, np.array([zero], dtype=x.dtype))
    sums = np.cumsum(padded[params._gather_index], axis=1)[:, -1]
    return sums / params.closed_degrees


def _round(theta, params: MechanismParams, t: int, eta, exact: bool):
    sigma = _exact(params.sigma) if exact else params.sigma
    x = theta + eta
    if params.graph is None:
        y = _server_feedback(x)
        s = sigma[0]
        new_theta = (1 - s) * theta + s * y
    else:
        y = _local_feedback(x, params)
        new_theta = (1 - sigma) * theta + sigma * y
    return RoundRecord(t, theta, eta, x, y), new_theta


def sample_noise(params: MechanismParams, t: int, rng) -> np.ndarray:
    """Noise vector of round `t` from a :class:`ClientStreams` or a Generator."""
    if isinstance(rng, ClientStreams):
        return rng.noise(params.schedule, t, 1)[0]
    return sample_laplace(params.schedule.scale_at(t), rng, size=params.n)


def _round_noise(theta, params, t, rng, eta, exact):
    if eta is None:
        if rng is None:
            raise ValueError("either rng or eta must be given")
        eta = sample_noise(params, t, rng)
    eta = _prepare(eta, exact)
    if eta.shape != (params.n,):
        raise ValueError(f"noise vector has shape {eta.shape}, expected ({params.n},)")
    return eta


def run_round_centralized(theta, params: MechanismParams, t: int, rng=None, eta=None, exact=False):
    """One round of the client-server mechanism.

    Returns ``(record, next_theta)``.  Pass `eta` to force the noise vector
    instead of drawing it from `rng`.
    """
    if params.graph is not None:
        raise ValueError("parameters describe the distributed mechanism")
    theta = _prepare(theta, exact)
    return _round(theta, params, t, _round_noise(theta, params, t, rng, eta, exact), exact)


def run_round_distributed(theta, params: MechanismParams, t: int, rng=None, eta=None, exact=False):
    """One round of the distributed mechanism; see :func:`run_round_centralized`."""
    if params.graph is None:
        raise ValueError("parameters describe the client-server mechanism")
    theta = _prepare(theta, exact)
    return _round(theta, params, t, _round_noise(theta, params, t, rng, eta, exact), exact)


def run_round(theta, params: MechanismParams, t: int, rng=None, eta=None, exact=False):
    fn = run_round_centralized if params.graph is None else run_round_distributed
    return fn(theta, params, t, rng=rng, eta=eta, exact=exact)


def inject_noise_sequence(theta0, params: MechanismParams, eta_seq, exact: bool = False) -> ExecutionTrace:
    """Run the mechanism on a supplied noise sequence of shape ``(T, n)``."""
    theta = _prepare(theta0, exact)
    if theta.shape != (params.n,):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({params.n},)")
    eta_seq = np.asarray(eta_seq, dtype=object if exact else float)
    if eta_seq.size == 0:
        eta_seq = eta_seq.reshape(0, params.n)
    if eta_seq.ndim != 2 or eta_seq.shape[1] != params.n:
        raise ValueError(f"noise sequence has shape {eta_seq.shape}, expected (T, {params.n})")
    eta_seq = _prepare(eta_seq, exact)
    theta0 = theta.copy()
    records = []
    for t in range(eta_seq.shape[0]):
        rec, theta = _round(theta, params, t, eta_seq[t], exact)
        records.append(rec)
    return ExecutionTrace(params, theta0, tuple(records), theta)


def default_horizon(params: MechanismParams, theta0, tol: float = 1e-12) -> int:
    """Rounds after which both the noise scale and the contracted initial
    spread ``(1 - sigma_min)^T * spread`` are below `tol`."""
    T = 0
    if params.c > 0:
        T = max(T, math.ceil(math.log(tol / params.c) / math.log(params.q)))
    theta0 = np.asarray(theta0, dtype=float)
    spread = float(theta0.max() - theta0.min()) if theta0.size else 0.0
    if spread > 0:
        T = max(T, math.ceil(math.log(tol / spread) / math.log(1.0 - params.sigma_min)))
    return max(T, 0)


def run_execution(theta0, params: MechanismParams, T: Optional[int] = None, seed=0,
                  exact: bool = False) -> ExecutionTrace:
    """Sample a `T`-round execution.

    Client ``i`` draws its noise from its own substream of `seed` (an int or
    a ``SeedSequence``), so the trace is a pure function of the arguments.
    ``T=None`` picks :func:`default_horizon`.
    """
    if T is None:
        T = default_horizon(params, theta0)
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    eta = ClientStreams(seed, params.n).noise(params.schedule, 0, T)
    return inject_noise_sequence(theta0, params, eta, exact=exact)


def observe(trace: ExecutionTrace) -> Observation:
    comp = tuple(sorted(trace.params.compromised))
    thetas = trace.thetas()
    return Observation(
        x_seq=trace.xs(),
        y_seq=trace.ys(),
        compromised=comp,
        compromised_theta_seq=thetas[:, list(comp)],
    )


def weighted_mean(theta, params: MechanismParams):
    """``sum(gamma_i theta_i) / sum(gamma_i)``; the plain mean for the
    client-server mechanism."""
    theta = np.asarray(theta)
    if theta.dtype == object:
        g = _exact(params.gamma)
        return _ordered_sum(g * theta) / _ordered_sum(g)
    return float(np.dot(params.gamma, theta) / params.gamma.sum())
