"""Local cost oracles, sampling, and dataset ingestion.

Two loss kinds are built in, both with per-sample losses ``G_i(x, xi)`` for
``xi = (a, b)``:

``least_squares``
    ``0.5 (a^T x - b)^2``.
``nc_logistic``
    ``log(1 + exp(-b a^T x)) + c sum_j x_j^2 / (1 + x_j^2)`` with labels in
    ``{-1, +1}`` and nonconvex weight ``c`` (``a_reg``).

Empirical oracles hold ``m`` stored samples per node. The population oracle
(least squares only) draws fresh Gaussian-design samples on every call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngs
from .errors import BadShape, NonFinite, ParseError, TooFewRows
from .prox import Regularizer, h_eval

LOSSES = ("least_squares", "nc_logistic")
PARTITIONS = ("contiguous", "shuffled", "label_skewed")


@dataclass(eq=False)
class SampleBatch:
    """Samples drawn by one node at one iteration.

    Empirical batches carry row ``indices`` into the local shard; population
    batches carry freshly drawn ``features`` and ``targets``.
    """

    node: int
    t: int
    indices: np.ndarray | None = None
    features: np.ndarray | None = None
    targets: np.ndarray | None = None

    @property
    def size(self) -> int:
        if self.indices is not None:
            return int(self.indices.size)
        return int(self.targets.size)


def _loss_grad(kind: str, a_reg: float, feats: np.ndarray, targets: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Mean per-sample gradient over the rows of ``feats``."""
    if kind == "least_squares":
        return feats.T @ (feats @ x - targets) / targets.size
    margin = targets * (feats @ x)
    # d/dz log(1 + e^{-z}) = -1 / (1 + e^{z})
    weight = np.exp(-np.logaddexp(0.0, margin))
    grad = -(feats.T @ (targets * weight)) / targets.size
    return grad + a_reg * 2.0 * x / (1.0 + x * x) ** 2


def _per_sample_grads(kind: str, a_reg: float, feats: np.ndarray, targets: np.ndarray, x: np.ndarray) -> np.ndarray:
    if kind == "least_squares":
        return feats * (feats @ x - targets)[:, None]
    weight = np.exp(-np.logaddexp(0.0, targets * (feats @ x)))
    return -feats * (targets * weight)[:, None] + a_reg * 2.0 * x / (1.0 + x * x) ** 2


def _loss_value(kind: str, a_reg: float, feats: np.ndarray, targets: np.ndarray, x: np.ndarray) -> float:
    if kind == "least_squares":
        res = feats @ x - targets
        return float(0.5 * np.mean(res * res))
    margin = targets * (feats @ x)
    return float(np.mean(np.logaddexp(0.0, -margin)) + a_reg * np.sum(x * x / (1.0 + x * x)))


def _check(v: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NonFinite("oracle produced a non-finite value")
    return v


class ProblemOracle:
    """Common interface of the local-cost oracles.

    Attributes
    ----------
    n, p : int
        Node count and dimension.
    kind : str
        Loss kind.
    risk : str
        ``"empirical"`` or ``"population"``.
    L : float
        Smoothness constant of every ``f_i``.
    L_mss : float
        Mean-squared smoothness constant of the single-sample gradients.
    nu : float or None
        Gradient noise level, filled in by :func:`estimate_nu`.
    """

    kind: str
    risk: str
    n: int
    p: int
    a_reg: float = 0.0
    L: float
    L_mss: float
    mss: bool = True
    nu: float | None = None
    m: int | None = None

    # per-node primitives -------------------------------------------------

    def local_exact_gradient(self, i: int, x) -> np.ndarray:
        raise NotImplementedError

    def local_value(self, i: int, x) -> float:
        raise NotImplementedError

    def sample_batch(self, i: int, t: int, size: int, gen: np.random.Generator, full_pass: bool = False) -> SampleBatch:
        raise NotImplementedError

    def _batch_arrays(self, batch: SampleBatch) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def stochastic_gradient(self, i: int, x, batch: SampleBatch) -> np.ndarray:
        """Average of the per-sample gradients in ``batch`` at ``x``."""
        if batch.size < 1:
            raise BadShape("batch must hold at least one sample")
        feats, targets = self._batch_arrays(batch)
        return _check(_loss_grad(self.kind, self.a_reg, feats, targets, np.asarray(x, dtype=float)))

    def paired_gradient_difference(self, i: int, x_new, x_old, batch: SampleBatch) -> np.ndarray:
        """``(1/b) sum_s [grad G(x_new, xi_s) - grad G(x_old, xi_s)]`` on one shared batch."""
        if batch.size < 1:
            raise BadShape("batch must hold at least one sample")
        feats, targets = self._batch_arrays(batch)
        new = _loss_grad(self.kind, self.a_reg, feats, targets, np.asarray(x_new, dtype=float))
        old = _loss_grad(self.kind, self.a_reg, feats, targets, np.asarray(x_old, dtype=float))
        return _check(new - old)

    def gradient_variance(self, i: int, x) -> float:
        """Exact ``E||grad G_i(x, xi) - grad f_i(x)||^2`` for a single sample."""
        raise NotImplementedError

    # network-wide helpers ------------------------------------------------

    def local_gradients(self, x_stack) -> np.ndarray:
        """Row ``i`` is ``grad f_i`` evaluated at row ``i`` of ``x_stack``."""
        x_stack = np.asarray(x_stack, dtype=float)
        return np.stack([self.local_exact_gradient(i, x_stack[i]) for i in range(self.n)])

    def global_gradient(self, x) -> np.ndarray:
        return self.global_gradient_many(np.asarray(x, dtype=float)[None, :])[0]

    def global_gradient_many(self, points) -> np.ndarray:
        """``grad F`` at every row of ``points``."""
        points = np.asarray(points, dtype=float)
        total = np.zeros_like(points)
        for i in range(self.n):
            total += np.stack([self.local_exact_gradient(i, x) for x in points])
        return total / self.n

    def global_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(sum(self.local_value(i, x) for i in range(self.n)) / self.n)

    @property
    def value_is_proxy(self) -> bool:
        return self.risk == "population"


class EmpiricalOracle(ProblemOracle):
    """Finite-sum local costs from per-node data shards ``(A_i, b_i)``."""

    risk = "empirical"

    def __init__(self, kind: str, features, targets, a_reg: float = 0.0):
        if kind not in LOSSES:
            raise BadShape(f"unknown loss kind {kind!r}")
        feats = [np.ascontiguousarray(a, dtype=float) for a in features]
        targs = [np.ascontiguousarray(b, dtype=float).ravel() for b in targets]
        if not feats or len(feats) != len(targs):
            raise BadShape("need one target vector per feature shard")
        m, p = feats[0].shape
        for a, b in zip(feats, targs):
            if a.shape != (m, p) or b.shape != (m,):
                raise BadShape("all shards must share the same (m, p) shape")
        if m < 1 or p < 1:
            raise BadShape("shards must be non-empty")
        self.kind = kind
        self.a_reg = float(a_reg) if kind == "nc_logistic" else 0.0
        self.features = feats
        self.targets = targs
        self.n, self.m, self.p = len(feats), m, p
        self._stacked = np.concatenate(feats)
        self._stacked_targets = np.concatenate(targs)
        self.L, self.L_mss = self._constants()

    def _constants(self) -> tuple[float, float]:
        sig = max(np.linalg.norm(a, 2) ** 2 / self.m for a in self.features)
        # largest eigenvalue of (1/m) sum_s ||a_s||^2 a_s a_s^T
        fourth = 0.0
        for a in self.features:
            wts = np.sum(a * a, axis=1)
            fourth = max(fourth, np.linalg.eigvalsh((a * wts[:, None]).T @ a / self.m)[-1])
        if self.kind == "least_squares":
            return float(sig), float(math.sqrt(fourth))
        curv = 2.0 * self.a_reg
        return float(0.25 * sig + curv), float(0.25 * math.sqrt(fourth) + curv)

    def local_exact_gradient(self, i, x):
        return _check(_loss_grad(self.kind, self.a_reg, self.features[i], self.targets[i], np.asarray(x, dtype=float)))

    def local_value(self, i, x):
        return _loss_value(self.kind, self.a_reg, self.features[i], self.targets[i], np.asarray(x, dtype=float))

    def global_gradient_many(self, points):
        points = np.asarray(points, dtype=float)
        a, b = self._stacked, self._stacked_targets
        pred = a @ points.T
        total = self.n * self.m
        if self.kind == "least_squares":
            return ((pred - b[:, None]).T @ a) / total
        weight = np.exp(-np.logaddexp(0.0, b[:, None] * pred))
        grad = -((b[:, None] * weight).T @ a) / total
        return grad + self.a_reg * 2.0 * points / (1.0 + points * points) ** 2

    def global_value(self, x):
        return _loss_value(self.kind, self.a_reg, self._stacked, self._stacked_targets, np.asarray(x, dtype=float))

    def sample_batch(self, i, t, size, gen, full_pass=False):
        if size < 1:
            raise BadShape("batch size must be >= 1")
        if full_pass:
            if size != self.m:
                raise BadShape("full-pass batches must cover all m samples")
            idx = np.arange(self.m)
        else:
            idx = gen.integers(0, self.m, size=size)
        return SampleBatch(node=i, t=t, indices=idx)

    def _batch_arrays(self, batch):
        i = batch.node
        if batch.indices.size == self.m and np.array_equal(batch.indices, np.arange(self.m)):
            return self.features[i], self.targets[i]
        return self.features[i][batch.indices], self.targets[i][batch.indices]

    def per_sample_gradients(self, i, x) -> np.ndarray:
        return _per_sample_grads(self.kind, self.a_reg, self.features[i], self.targets[i], np.asarray(x, dtype=float))

    def gradient_variance(self, i, x):
        g = self.per_sample_gradients(i, x)
        dev = g - g.mean(axis=0)
        return float(np.mean(np.sum(dev * dev, axis=1)))

    def pooled(self) -> "EmpiricalOracle":
        """Single-node oracle over all samples from every shard."""
        return EmpiricalOracle(self.kind, [self._stacked], [self._stacked_targets], self.a_reg)


class PopulationLeastSquares(ProblemOracle):
    """Online least squares with ``a ~ N(0, diag(d))`` and ``b = a^T theta_i + noise``.

    Local costs are known in closed form, which the simulator uses for the
    exact-gradient observer. Objective values are reported from a fixed
    proxy pool of ``m`` samples per node and flagged as proxies.
    """

    risk = "population"
    kind = "least_squares"

    def __init__(self, thetas, design_var, noise: float, proxy_pool: int = 1000, seed: int = 0):
        self.thetas = np.asarray(thetas, dtype=float)
        self.design_var = np.asarray(design_var, dtype=float)
        self.noise = float(noise)
        self.n, self.p = self.thetas.shape
        if self.design_var.shape != (self.p,) or np.any(self.design_var <= 0):
            raise BadShape("design variances must be positive, one per coordinate")
        self.m = None
        d = self.design_var
        self.L = float(d.max())
        self.L_mss = float(math.sqrt(d.max() * d.sum() + 2.0 * d.max() ** 2))
        gen = np.random.default_rng([int(seed), 99])
        self.proxy_features, self.proxy_targets = [], []
        for i in range(self.n):
            a, b = self._draw(i, proxy_pool, gen)
            self.proxy_features.append(a)
            self.proxy_targets.append(b)

    def _draw(self, i, size, gen):
        a = gen.standard_normal((size, self.p)) * np.sqrt(self.design_var)
        b = a @ self.thetas[i] + self.noise * gen.standard_normal(size)
        return a, b

    def local_exact_gradient(self, i, x):
        return _check(self.design_var * (np.asarray(x, dtype=float) - self.thetas[i]))

    def global_gradient_many(self, points):
        points = np.asarray(points, dtype=float)
        return self.design_var * (points - self.thetas.mean(axis=0))

    def local_value(self, i, x):
        return _loss_value(self.kind, 0.0, self.proxy_features[i], self.proxy_targets[i], np.asarray(x, dtype=float))

    def sample_batch(self, i, t, size, gen, full_pass=False):
        if size < 1:
            raise BadShape("batch size must be >= 1")
        if full_pass:
            raise BadShape("population risk has no finite sample set to pass over")
        a, b = self._draw(i, size, gen)
        return SampleBatch(node=i, t=t, features=a, targets=b)

    def _batch_arrays(self, batch):
        return batch.features, batch.targets

    def gradient_variance(self, i, x):
        e = np.asarray(x, dtype=float) - self.thetas[i]
        d = self.design_var
        return float(np.dot(e * e, d) * d.sum() + np.dot(e * e, d * d) + self.noise**2 * d.sum())


def global_objective(o: ProblemOracle, h: Regularizer, x):
    """``Psi(x) = F(x) + h(x)``; ``PLUS_INF`` outside dom(h)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFinite("objective evaluated at a non-finite point")
    return o.global_value(x) + h_eval(h, x)


def estimate_nu(o: ProblemOracle, x, draws: int = 10_000, seed: int = 0) -> np.ndarray:
    """Pilot estimate of the per-node single-sample variances ``nu_i^2`` at ``x``.

    Sets ``o.nu`` to ``sqrt(mean_i nu_i^2)`` and returns the per-node array.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(o.n)
    for i in range(o.n):
        gen = rngs.stream(seed, i, 0, rngs.PILOT)
        batch = o.sample_batch(i, 0, draws, gen)
        feats, targets = o._batch_arrays(batch)
        dev = _per_sample_grads(o.kind, o.a_reg, feats, targets, x) - o.local_exact_gradient(i, x)
        out[i] = float(np.mean(np.sum(dev * dev, axis=1)))
    o.nu = float(math.sqrt(out.mean()))
    return out


# ---------------------------------------------------------------------------
# data


def read_dataset(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Numeric CSV, last column is the target; blank and ``#`` lines skipped."""
    rows = []
    width = None
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric field") from exc
        if width is None:
            width = len(row)
        if len(row) != width or width < 2:
            raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    return data[:, :-1], data[:, -1]


def partition(features, targets, n: int, scheme: str = "contiguous", seed: int = 0):
    """Split rows into ``n`` equal shards.

    ``rows // n`` rows go to each node; trailing leftovers are dropped so every
    node has the same ``m``. ``label_skewed`` stable-sorts by target first.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    rows = targets.size
    if rows < n:
        raise TooFewRows(f"{rows} rows cannot feed {n} nodes")
    if scheme == "contiguous":
        order = np.arange(rows)
    elif scheme == "shuffled":
        order = np.random.default_rng(seed).permutation(rows)
    elif scheme == "label_skewed":
        # shuffle first so ties are broken by the seed, then sort stably
        order = np.random.default_rng(seed).permutation(rows)
        order = order[np.argsort(targets[order], kind="stable")]
    else:
        raise BadShape(f"unknown partition scheme {scheme!r}")
    m = rows // n
    shards_a = [features[order[k * m:(k + 1) * m]] for k in range(n)]
    shards_b = [targets[order[k * m:(k + 1) * m]] for k in range(n)]
    return shards_a, shards_b


def load_and_partition(path, n: int, scheme: str = "contiguous", seed: int = 0):
    features, targets = read_dataset(path)
    return partition(features, targets, n, scheme, seed)


def as_signed_labels(targets) -> np.ndarray:
    """Map {0, 1} labels to {-1, +1}; leaves {-1, +1} alone."""
    targets = np.asarray(targets, dtype=float)
    values = set(np.unique(targets).tolist())
    if values <= {0.0, 1.0}:
        return 2.0 * targets - 1.0
    if values <= {-1.0, 1.0}:
        return targets
    raise ParseError("logistic targets must be binary")


def oracle_from_dataset(kind: str, path, n: int, scheme: str = "contiguous", seed: int = 0, a_reg: float = 0.1) -> EmpiricalOracle:
    shards_a, shards_b = load_and_partition(path, n, scheme, seed)
    if kind == "nc_logistic":
        shards_b = [as_signed_labels(b) for b in shards_b]
    return EmpiricalOracle(kind, shards_a, shards_b, a_reg)


def _node_parameters(gen, n, p, heterogeneity):
    shared = gen.standard_normal(p)
    local = gen.standard_normal((n, p))
    return (1.0 - heterogeneity) * shared + heterogeneity * local


def synthesize_problem(kind: str, n: int, p: int, m: int, heterogeneity: float = 0.5, seed: int = 0,
                       risk: str = "empirical", a_reg: float = 0.1, noise: float = 0.1) -> ProblemOracle:
    """Random instance whose per-node ground truth interpolates between a
    shared parameter (``heterogeneity=0``) and independent ones (``1``).

    For ``risk="population"`` (least squares only) ``m`` sets the size of the
    proxy pool used to report objective values.
    """
    if n < 1 or p < 1 or m < 1:
        raise BadShape("n, p and m must all be >= 1")
    if not 0.0 <= heterogeneity <= 1.0:
        raise BadShape("heterogeneity must lie in [0, 1]")
    gen = np.random.default_rng([int(seed), 7])
    thetas = _node_parameters(gen, n, p, heterogeneity)
    if risk == "population":
        if kind != "least_squares":
            raise BadShape("population risk is only available for least_squares")
        design = gen.uniform(0.5, 1.5, size=p)
        return PopulationLeastSquares(thetas, design, noise, proxy_pool=m, seed=seed)
    if risk != "empirical":
        raise BadShape(f"unknown risk {risk!r}")
    feats, targs = [], []
    for i in range(n):
        a = gen.standard_normal((m, p))
        score = a @ thetas[i]
        if kind == "least_squares":
            b = score + noise * gen.standard_normal(m)
        elif kind == "nc_logistic":
            b = np.where(gen.random(m) < 1.0 / (1.0 + np.exp(-score)), 1.0, -1.0)
        else:
            raise BadShape(f"unknown loss kind {kind!r}")
        feats.append(a)
        targs.append(b)
    return EmpiricalOracle(kind, feats, targs, a_reg)
