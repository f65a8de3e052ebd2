"""Network topologies, doubly stochastic mixing matrices and their spectra."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadShape, NotConnected, NotDoublyStochastic, ParseError, SparsityMismatch

KINDS = ("ring", "path", "grid2d", "complete", "star", "erdos_renyi")

_STOCHASTIC_TOL = 1e-10
_ER_RETRIES = 200


@dataclass(frozen=True)
class Graph:
    """Undirected graph on nodes ``0..n-1``.

    Edges are stored as sorted pairs ``(i, r)`` with ``i < r``; self-loops are
    implicit and never listed.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)
    kind: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise BadShape(f"graph needs at least one node, got n={self.n}")
        clean = set()
        for i, r in self.edges:
            if i == r or not (0 <= i < self.n and 0 <= r < self.n):
                raise BadShape(f"invalid edge ({i}, {r}) for n={self.n}")
            clean.add((min(i, r), max(i, r)))
        object.__setattr__(self, "edges", frozenset(clean))

    def neighbors(self, i: int) -> list[int]:
        return sorted([r for a, r in self.edges if a == i] + [a for a, r in self.edges if r == i])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, r in self.edges:
            deg[i] += 1
            deg[r] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, r in self.edges:
            adj[i, r] = adj[r, i] = True
        return adj


def is_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    adj = {i: [] for i in range(g.n)}
    for i, r in g.edges:
        adj[i].append(r)
        adj[r].append(i)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == g.n


def build_topology(kind: str, n: int, prob: float = 0.5, seed: int = 0) -> Graph:
    """Build a connected topology of the given kind on ``n`` nodes.

    ``prob`` and ``seed`` only matter for ``erdos_renyi``, which resamples
    until the draw is connected.
    """
    if n < 1:
        raise BadShape(f"n must be >= 1, got {n}")
    edges: set[tuple[int, int]] = set()
    if kind == "ring":
        if n == 2:
            edges.add((0, 1))
        elif n > 2:
            edges.update((i, (i + 1) % n) for i in range(n))
    elif kind == "path":
        edges.update((i, i + 1) for i in range(n - 1))
    elif kind == "complete":
        edges.update((i, r) for i in range(n) for r in range(i + 1, n))
    elif kind == "star":
        edges.update((0, r) for r in range(1, n))
    elif kind == "grid2d":
        side = math.isqrt(n)
        if side * side != n:
            raise BadShape(f"grid2d needs a perfect square, got n={n}")
        for row in range(side):
            for col in range(side):
                i = row * side + col
                if col + 1 < side:
                    edges.add((i, i + 1))
                if row + 1 < side:
                    edges.add((i, i + side))
    elif kind == "erdos_renyi":
        if not 0.0 <= prob <= 1.0:
            raise BadShape(f"edge probability must lie in [0, 1], got {prob}")
        rng = np.random.default_rng(seed)
        iu, ju = np.triu_indices(n, k=1)
        for _ in range(_ER_RETRIES):
            keep = rng.random(iu.size) < prob
            g = Graph(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())), kind)
            if is_connected(g):
                return g
        raise NotConnected(f"erdos_renyi(n={n}, p={prob}) not connected after {_ER_RETRIES} draws")
    else:
        raise BadShape(f"unknown topology kind {kind!r}")
    return Graph(n, frozenset(edges), kind)


def parse_topology(spec: str, n: int) -> Graph:
    """Parse a config topology string: ``ring``, ``path``, ``grid2d``,
    ``complete``, ``star`` or ``er:<p>:<seed>``."""
    spec = spec.strip()
    if spec.startswith("er:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ParseError(f"expected er:<p>:<seed>, got {spec!r}")
        try:
            prob, seed = float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ParseError(f"bad erdos_renyi spec {spec!r}") from exc
        return build_topology("erdos_renyi", n, prob=prob, seed=seed)
    if spec not in KINDS or spec == "erdos_renyi":
        raise ParseError(f"unknown topology {spec!r}")
    return build_topology(spec, n)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Dense doubly stochastic mixing matrix with its cached ``lambda_star``."""

    entries: np.ndarray
    lambda_star: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def symmetric(self) -> bool:
        return bool(np.array_equal(self.entries, self.entries.T))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def second_singular_value(m: np.ndarray) -> float:
    """``||M - (1/n) 11^T||_2`` for a doubly stochastic ``M``."""
    n = m.shape[0]
    if n == 1:
        return 0.0
    dev = m - np.full((n, n), 1.0 / n)
    return float(np.linalg.svd(dev, compute_uv=False)[0])


def _wrap(m: np.ndarray) -> WeightMatrix:
    m = np.array(m, dtype=float)
    m.setflags(write=False)
    return WeightMatrix(m, second_singular_value(m))


def metropolis_weights(g: Graph, lazy: bool = False) -> WeightMatrix:
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_r))`` on edges.

    With ``lazy=True`` the result is ``(I + W) / 2``, whose spectrum lies in
    ``[0, 1]``.
    """
    if not is_connected(g):
        raise NotConnected("Metropolis weights need a connected graph")
    deg = g.degrees()
    w = np.zeros((g.n, g.n))
    for i, r in g.edges:
        w[i, r] = w[r, i] = 1.0 / (1.0 + max(deg[i], deg[r]))
    for i in range(g.n):
        w[i, i] = 1.0 - (w[i].sum() - w[i, i])
    if lazy:
        w = 0.5 * (np.eye(g.n) + w)
    return _wrap(w)


def spectral_gap(w: WeightMatrix) -> float:
    return 1.0 - w.lambda_star


def validate_weight_matrix(m, g: Graph) -> WeightMatrix:
    """Accept a user-supplied mixing matrix for graph ``g``.

    The matrix must be square of size ``g.n``, nonnegative, doubly stochastic
    within 1e-10, and positive exactly on the diagonal and on entries whose
    node pair is an edge of ``g``. Asymmetric matrices are allowed.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (g.n, g.n):
        raise BadShape(f"expected a {g.n}x{g.n} matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotDoublyStochastic("matrix has non-finite entries")
    if np.any(m < 0):
        raise NotDoublyStochastic("matrix has negative entries")
    row_err = np.max(np.abs(m.sum(axis=1) - 1.0))
    col_err = np.max(np.abs(m.sum(axis=0) - 1.0))
    if row_err > _STOCHASTIC_TOL or col_err > _STOCHASTIC_TOL:
        raise NotDoublyStochastic(f"row/column sums off by {max(row_err, col_err):.3g}")
    support = g.adjacency() | np.eye(g.n, dtype=bool)
    bad = (m > 0) != support
    if np.any(bad):
        i, r = map(int, np.argwhere(bad)[0])
        raise SparsityMismatch(f"entry ({i}, {r}) = {m[i, r]:g} disagrees with graph support")
    return _wrap(m)


def load_weight_csv(path: str | Path) -> np.ndarray:
    """Read ``n`` lines of ``n`` comma-separated reals."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ParseError(f"{path}: weight matrix must be square")
    return np.array(rows)
