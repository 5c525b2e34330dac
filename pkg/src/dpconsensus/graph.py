"""Undirected communication graphs, Laplacians and the distributed convergence test.

Nodes are 0-based in the Python API.  The plain-text graph format is 1-based::

    # comment
    4
    1 2
    2 3
    3 4
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "Graph",
    "GraphFormatError",
    "ConvergenceCheck",
    "laplacian",
    "eigenvalues_symmetric",
    "is_connected",
    "check_convergence_condition",
    "path_graph",
    "ring_graph",
    "complete_graph",
    "erdos_renyi",
    "parse_graph",
    "read_graph",
    "format_graph",
    "write_graph",
]

SPECTRAL_CONNECTIVITY_TOL = 1e-7


class GraphFormatError(ValueError):
    """Malformed graph file; ``lineno`` is 1-based (0 if not line specific)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0 .. n-1``.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        norm = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {(i, j)} has an endpoint outside 0..{self.n - 1}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        edges = list(edges)
        seen = set()
        for i, j in edges:
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        return cls(n, frozenset(edges))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(v)) for v in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(v) for v in self.neighbors], dtype=int)

    @cached_property
    def closed_neighborhoods(self) -> tuple[tuple[int, ...], ...]:
        """``N(i) | {i}`` in ascending index order."""
        return tuple(tuple(sorted(v + (i,))) for i, v in enumerate(self.neighbors))

    @cached_property
    def laplacian(self) -> np.ndarray:
        return laplacian(self)

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Laplacian eigenvalues in ascending order."""
        return eigenvalues_symmetric(self.laplacian)

    def relabel(self, perm) -> "Graph":
        """Graph with node ``i`` renamed ``perm[i]``."""
        perm = list(perm)
        return Graph(self.n, frozenset((perm[i], perm[j]) for i, j in self.edges))


def laplacian(g: Graph) -> np.ndarray:
    """Graph Laplacian: degrees on the diagonal, -1 for each edge."""
    L = np.zeros((g.n, g.n))
    for i, j in g.edges:
        L[i, j] = L[j, i] = -1.0
    L[np.diag_indices(g.n)] = g.degrees
    return L


def eigenvalues_symmetric(mat, tol: float = 1e-9, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all ``(p, q)`` pairs until the off-diagonal Frobenius norm is
    below ``tol`` times the Frobenius norm of `mat`.

    Returns
    -------
    ndarray
        Eigenvalues in ascending order.

    Raises
    ------
    ValueError
        If `mat` is not square or not symmetric within `tol`.
    """
    A = np.array(mat, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if n and np.max(np.abs(A - A.T)) > tol * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    if scale == 0.0 or n < 2:
        return np.sort(np.diag(A))

    target = tol * scale
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off < target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (tau + math.copysign(math.hypot(1.0, tau), tau)) if tau else 1.0
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.diag(A))


def is_connected(g: Graph) -> bool:
    """Union-find reachability test."""
    parent = list(range(g.n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    components = g.n
    for i, j in g.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            components -= 1
    return components == 1


@dataclass(frozen=True)
class ConvergenceCheck:
    """Spectral quantities behind the distributed convergence condition.

    ``contraction_margin`` is ``2m - lambdaN * M**2``, the quantity whose
    positivity the potential-contraction argument needs.  ``printed_form_holds``
    reports the weaker-looking printed inequality ``lambdaN < M**2 / (2m)``
    for comparison only.
    """

    lambda2: float
    lambdaN: float
    m: float
    M: float
    connected: bool
    spectral_connected: bool
    contraction_margin: float
    a: float
    printed_form_holds: bool

    @property
    def holds(self) -> bool:
        return self.connected and self.contraction_margin > 0

    def to_text(self) -> str:
        rows = [
            ("lambda2", self.lambda2),
            ("lambdaN", self.lambdaN),
            ("m", self.m),
            ("M", self.M),
            ("connected", self.connected),
            ("spectral_connected", self.spectral_connected),
            ("contraction_margin", self.contraction_margin),
            ("a", self.a),
            ("condition_2m_minus_lambdaN_M2_positive", self.contraction_margin > 0),
            ("condition_lambdaN_lt_M2_over_2m", self.printed_form_holds),
            ("convergence_guaranteed", self.holds),
        ]
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return repr(float(v))


def check_convergence_condition(g: Graph, sigma) -> ConvergenceCheck:
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (g.n,))
    d = sigma / (g.degrees + 1)
    m, M = float(d.min()), float(d.max())
    spec = g.spectrum
    lam2 = float(spec[1]) if g.n > 1 else 0.0
    lamN = float(spec[-1])
    connected = is_connected(g)
    margin = 2.0 * m - lamN * M**2
    a = min(lam2 * margin, 1.0) if connected else 0.0
    return ConvergenceCheck(
        lambda2=lam2,
        lambdaN=lamN,
        m=m,
        M=M,
        connected=connected,
        spectral_connected=lam2 > SPECTRAL_CONNECTIVITY_TOL,
        contraction_margin=margin,
        a=a,
        printed_form_holds=lamN < M**2 / (2.0 * m),
    )


def path_graph(n: int) -> Graph:
    return Graph(n, frozenset((i, i + 1) for i in range(n - 1)))


def ring_graph(n: int) -> Graph:
    if n < 3:
        return path_graph(n)
    return Graph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> Graph:
    return Graph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


def erdos_renyi(n: int, p: float, rng=None) -> Graph:
    """G(n, p) random graph; `rng` is a Generator or a seed."""
    if not 0 <= p <= 1:
        raise ValueError(f"edge probability must lie in [0, 1], got {p!r}")
    rng = np.random.default_rng(rng)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))


def parse_graph(text: str) -> Graph:
    n = None
    edges: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise GraphFormatError(f"expected integers, got {raw.strip()!r}", lineno) from None
        if n is None:
            if len(nums) != 1 or nums[0] < 1:
                raise GraphFormatError("first line must be a positive node count", lineno)
            n = nums[0]
            continue
        if len(nums) != 2:
            raise GraphFormatError(f"expected an edge 'i j', got {raw.strip()!r}", lineno)
        i, j = nums
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphFormatError(f"endpoint out of range 1..{n}", lineno)
        if i >= j:
            raise GraphFormatError(f"edge must satisfy i < j, got {i} {j}", lineno)
        if (i - 1, j - 1) in edges:
            raise GraphFormatError(f"duplicate edge {i} {j}", lineno)
        edges.add((i - 1, j - 1))
    if n is None:
        raise GraphFormatError("missing node count")
    return Graph(n, frozenset(edges))


def read_graph(path) -> Graph:
    return parse_graph(Path(path).read_text())


def format_graph(g: Graph) -> str:
    lines = [str(g.n)] + [f"{i + 1} {j + 1}" for i, j in sorted(g.edges)]
    return "\n".join(lines) + "\n"


def write_graph(g: Graph, path) -> None:
    Path(path).write_text(format_graph(g))
