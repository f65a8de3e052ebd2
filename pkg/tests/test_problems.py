import numpy as np
import pytest

from proxgt import rng as rngs
from proxgt.errors import BadShape, ParseError, TooFewRows
from proxgt.problems import (
    EmpiricalOracle, estimate_nu, global_objective, load_and_partition, oracle_from_dataset,
    partition, read_dataset, synthesize_problem,
)
from proxgt.prox import PLUS_INF, box, zero


def _finite_difference(f, x):
    step = 1e-6 * (1.0 + np.linalg.norm(x))
    return np.array([(f(x + step * e) - f(x - step * e)) / (2 * step) for e in np.eye(x.size)])


@pytest.fixture(scope="module")
def ls():
    return synthesize_problem("least_squares", n=3, p=6, m=80, heterogeneity=0.5, seed=1)


@pytest.fixture(scope="module")
def logit():
    return synthesize_problem("nc_logistic", n=3, p=6, m=80, heterogeneity=0.5, seed=2, a_reg=0.1)


@pytest.fixture(scope="module")
def pop():
    return synthesize_problem("least_squares", n=3, p=6, m=200, heterogeneity=0.5, seed=3,
                              risk="population", noise=0.5)


def test_ls_gradient_zero_at_local_minimizer(ls):
    for i in range(ls.n):
        x_star = np.linalg.lstsq(ls.features[i], ls.targets[i], rcond=None)[0]
        assert np.max(np.abs(ls.local_exact_gradient(i, x_star))) < 1e-12


def test_ls_gradient_closed_form(ls):
    x = np.random.default_rng(0).standard_normal(ls.p)
    a, b = ls.features[1], ls.targets[1]
    np.testing.assert_allclose(ls.local_exact_gradient(1, x), a.T @ (a @ x - b) / ls.m, rtol=1e-13)


def test_logistic_no_regularizer_matches_plain_logistic(logit):
    plain = EmpiricalOracle("nc_logistic", logit.features, logit.targets, a_reg=0.0)
    x = np.random.default_rng(1).standard_normal(logit.p)
    a, b = logit.features[0], logit.targets[0]
    expected = np.mean([-bi * ai / (1 + np.exp(bi * ai @ x)) for ai, bi in zip(a, b)], axis=0)
    np.testing.assert_allclose(plain.local_exact_gradient(0, x), expected, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("name", ["ls", "logit", "pop"])
def test_gradient_matches_finite_differences(name, request):
    o = request.getfixturevalue(name)
    gen = np.random.default_rng(4)
    for i in range(o.n):
        for _ in range(3):
            x = gen.standard_normal(o.p)
            fd = _finite_difference(lambda z: o.local_value(i, z), x)
            g = o.local_exact_gradient(i, x)
            if o.risk == "population":
                # proxy-pool values differentiate to the proxy gradient, not the exact one
                a, b = o.proxy_features[i], o.proxy_targets[i]
                g = a.T @ (a @ x - b) / b.size
            assert np.linalg.norm(fd - g) <= 1e-5 * (1 + np.linalg.norm(g))
            d = gen.standard_normal(o.p)
            step = 1e-6 * (1 + np.linalg.norm(x))
            dd = (o.local_value(i, x + step * d) - o.local_value(i, x - step * d)) / (2 * step)
            assert dd == pytest.approx(g @ d, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("name", ["ls", "logit", "pop"])
def test_smoothness_bound(name, request):
    o = request.getfixturevalue(name)
    gen = np.random.default_rng(5)
    for _ in range(1000):
        i = int(gen.integers(o.n))
        x, y = gen.standard_normal(o.p) * 2, gen.standard_normal(o.p) * 2
        lhs = np.linalg.norm(o.local_exact_gradient(i, x) - o.local_exact_gradient(i, y))
        assert lhs <= o.L * np.linalg.norm(x - y) * (1 + 1e-12)


def test_full_batch_equals_exact(ls, logit):
    for o in (ls, logit):
        x = np.random.default_rng(6).standard_normal(o.p)
        batch = o.sample_batch(0, 1, o.m, None, full_pass=True)
        assert np.array_equal(o.stochastic_gradient(0, x, batch), o.local_exact_gradient(0, x))


@pytest.mark.parametrize("name", ["ls", "logit", "pop"])
def test_unbiased(name, request):
    o = request.getfixturevalue(name)
    x = np.random.default_rng(7).standard_normal(o.p)
    draws = 10_000
    gen = rngs.stream(11, 0, 1, rngs.TEST)
    batch = o.sample_batch(0, 1, draws, gen)
    feats, targets = o._batch_arrays(batch)
    singles = np.stack([o.stochastic_gradient(0, x, _one(batch, k)) for k in range(0, draws, 1000)])
    assert singles.shape[0] == 10  # spot-check single-sample path
    g = _per_sample(o, feats, targets, x)
    sigma = g.std(axis=0, ddof=1)
    assert np.all(np.abs(g.mean(axis=0) - o.local_exact_gradient(0, x)) <= 4 * sigma / np.sqrt(draws))


def _one(batch, k):
    from proxgt.problems import SampleBatch
    if batch.indices is not None:
        return SampleBatch(batch.node, batch.t, indices=batch.indices[k:k + 1])
    return SampleBatch(batch.node, batch.t, features=batch.features[k:k + 1], targets=batch.targets[k:k + 1])


def _per_sample(o, feats, targets, x):
    # independent per-sample gradients written out from the loss definitions
    if o.kind == "least_squares":
        return feats * (feats @ x - targets)[:, None]
    w = 1.0 / (1.0 + np.exp(targets * (feats @ x)))
    return -feats * (targets * w)[:, None] + o.a_reg * 2 * x / (1 + x * x) ** 2


def test_batch_determinism(ls, pop):
    x = np.ones(ls.p)
    for o in (ls, pop):
        b1 = o.sample_batch(1, 5, 7, rngs.stream(3, 1, 5))
        b2 = o.sample_batch(1, 5, 7, rngs.stream(3, 1, 5))
        assert np.array_equal(o.stochastic_gradient(1, x, b1), o.stochastic_gradient(1, x, b2))


def test_paired_difference_zero_and_full(ls):
    x = np.random.default_rng(8).standard_normal(ls.p)
    y = x + 0.1
    batch = ls.sample_batch(0, 1, 5, rngs.stream(0, 0, 1))
    assert np.array_equal(ls.paired_gradient_difference(0, x, x, batch), np.zeros(ls.p))
    full = ls.sample_batch(0, 1, ls.m, None, full_pass=True)
    np.testing.assert_allclose(ls.paired_gradient_difference(0, y, x, full),
                               ls.local_exact_gradient(0, y) - ls.local_exact_gradient(0, x), atol=1e-14)


@pytest.mark.parametrize("name", ["ls", "logit", "pop"])
def test_mean_squared_smoothness(name, request):
    o = request.getfixturevalue(name)
    gen = np.random.default_rng(9)
    ratios = []
    for k in range(1000):
        i = int(gen.integers(o.n))
        x, y = gen.standard_normal(o.p), gen.standard_normal(o.p)
        batch = o.sample_batch(i, k, 1, rngs.stream(9, i, k, rngs.TEST))
        diff = o.paired_gradient_difference(i, x, y, batch)
        ratios.append(diff @ diff / ((x - y) @ (x - y)))
    assert np.mean(ratios) <= o.L_mss**2 * 1.05


def test_ls_mss_constant_is_exact_fourth_moment(ls):
    # sup over directions of E ||a a^T d||^2 / ||d||^2 is the top eigenvalue of E ||a||^2 a a^T
    for i in range(ls.n):
        a = ls.features[i]
        M = sum(np.sum(r * r) * np.outer(r, r) for r in a) / ls.m
        assert np.sqrt(np.linalg.eigvalsh(M)[-1]) <= ls.L_mss * (1 + 1e-12)


def test_population_moments(pop):
    x = np.random.default_rng(10).standard_normal(pop.p)
    draws = pop.sample_batch(0, 1, 200_000, rngs.stream(1, 0, 1, rngs.TEST))
    g = draws.features * (draws.features @ x - draws.targets)[:, None]
    dev = g - pop.local_exact_gradient(0, x)
    # closed-form variance against a large Monte Carlo sample
    assert np.mean(np.sum(dev * dev, axis=1)) == pytest.approx(pop.gradient_variance(0, x), rel=0.03)


@pytest.mark.parametrize("name", ["ls", "logit", "pop"])
def test_bounded_variance_pilot(name, request):
    o = request.getfixturevalue(name)
    gen = np.random.default_rng(12)
    for k in range(10):
        x = gen.standard_normal(o.p)
        reported = np.array([o.gradient_variance(i, x) for i in range(o.n)])
        pilot = estimate_nu(o, x, seed=k)
        assert np.all(pilot <= reported * 1.1)
        assert np.all(pilot >= reported * 0.9)
        assert o.nu == pytest.approx(np.sqrt(pilot.mean()))


def test_global_objective_cases(ls):
    a = np.random.default_rng(13).standard_normal((20, 3))
    x = np.array([1.0, -2.0, 0.5])
    exact = EmpiricalOracle("least_squares", [a, a], [a @ x, a @ x])
    assert global_objective(exact, zero(), x) == pytest.approx(0.0, abs=1e-28)
    assert global_objective(ls, box(-0.1, 0.1), np.full(ls.p, 5.0)) is PLUS_INF
    b = a @ np.ones(3) + 0.3
    two = EmpiricalOracle("least_squares", [a, a], [b, b])
    one = EmpiricalOracle("least_squares", [a], [b])
    assert global_objective(two, zero(), x) == pytest.approx(global_objective(one, zero(), x), rel=1e-14)


def test_population_value_is_proxy(pop, ls):
    assert pop.value_is_proxy and not ls.value_is_proxy


def test_heterogeneity_zero_shares_parameter():
    o = synthesize_problem("least_squares", n=4, p=3, m=500, heterogeneity=0.0, seed=3, noise=0.0)
    thetas = [np.linalg.lstsq(o.features[i], o.targets[i], rcond=None)[0] for i in range(o.n)]
    for t in thetas[1:]:
        np.testing.assert_allclose(t, thetas[0], atol=1e-10)
    pop = synthesize_problem("least_squares", n=4, p=3, m=10, heterogeneity=0.0, seed=3, risk="population")
    assert np.ptp(pop.thetas, axis=0).max() == 0.0


def test_synthesize_deterministic():
    a = synthesize_problem("nc_logistic", 3, 4, 30, seed=9)
    b = synthesize_problem("nc_logistic", 3, 4, 30, seed=9)
    for i in range(3):
        assert np.array_equal(a.features[i], b.features[i]) and np.array_equal(a.targets[i], b.targets[i])


def test_synthesize_reports_L_formula():
    o = synthesize_problem("nc_logistic", 3, 4, 30, seed=9, a_reg=0.2)
    sig = max(np.linalg.svd(a, compute_uv=False)[0] ** 2 / 30 for a in o.features)
    assert o.L == pytest.approx(0.25 * sig + 0.4)


def test_synthesize_rejects_bad_shapes():
    with pytest.raises(BadShape):
        synthesize_problem("least_squares", 2, 0, 10)
    with pytest.raises(BadShape):
        synthesize_problem("nc_logistic", 2, 3, 10, risk="population")


def _write(path, rows):
    path.write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")


def test_contiguous_partition(tmp_path):
    rows = [[k, k * 2.0, k % 2] for k in range(100)]
    _write(tmp_path / "d.csv", rows)
    shards_a, shards_b = load_and_partition(tmp_path / "d.csv", 4)
    assert [s.shape for s in shards_a] == [(25, 2)] * 4
    assert shards_a[1][0, 0] == 25


def test_shuffled_partition_deterministic(tmp_path):
    _write(tmp_path / "d.csv", [[k, k % 2] for k in range(60)])
    a1, _ = load_and_partition(tmp_path / "d.csv", 3, "shuffled", seed=4)
    a2, _ = load_and_partition(tmp_path / "d.csv", 3, "shuffled", seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a1, a2))
    assert not np.array_equal(np.concatenate(a1).ravel(), np.arange(60.0))


def test_label_skew_spread():
    gen = np.random.default_rng(0)
    feats = gen.standard_normal((200, 3))
    labels = (gen.random(200) < 0.5).astype(float)
    _, skew = partition(feats, labels, 4, "label_skewed", seed=1)
    _, shuf = partition(feats, labels, 4, "shuffled", seed=1)
    spread = lambda shards: max(abs(s.mean() - labels.mean()) for s in shards)
    assert spread(skew) >= spread(shuf)


def test_partition_errors(tmp_path):
    with pytest.raises(TooFewRows):
        partition(np.zeros((3, 2)), np.zeros(3), 4)
    (tmp_path / "bad.csv").write_text("1,2\nx,3\n")
    with pytest.raises(ParseError):
        read_dataset(tmp_path / "bad.csv")
    (tmp_path / "ragged.csv").write_text("1,2\n1,2,3\n")
    with pytest.raises(ParseError):
        read_dataset(tmp_path / "ragged.csv")


def test_dataset_comments_and_labels(tmp_path):
    (tmp_path / "d.csv").write_text("# header\n1,0\n\n2,1\n3,0\n4,1\n")
    o = oracle_from_dataset("nc_logistic", tmp_path / "d.csv", 2)
    assert set(np.concatenate(o.targets).tolist()) == {-1.0, 1.0}
