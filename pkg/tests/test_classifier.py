import numpy as np
import pytest

from fccd.classifier import (
    DegenerateLogitsError,
    LinearHead,
    SinkhornError,
    TrainConfig,
    l2_rows,
    logit_norm_ce,
    mahalanobis_predict,
    ncm_predict,
    predict,
    sinkhorn_pseudolabels,
    train_head,
    train_head_sela,
)
from fccd.clustering import kmeans
from fccd.memory import ClusterGaussian, GaussianMemory


# ------------------------------------------------- logit-normalized loss


def test_uniform_logits_give_log_c():
    for c in (2, 3, 7):
        for a in (0.5, -4.0, 100.0):
            for tau in (0.05, 0.1, 2.0):
                loss, _ = logit_norm_ce(np.full(c, a), 0, tau)
                assert loss == pytest.approx(np.log(c), abs=1e-12)


def test_scale_invariance():
    rng = np.random.default_rng(0)
    for _ in range(100):
        c = int(rng.integers(2, 10))
        h = rng.normal(size=c)
        y = int(rng.integers(c))
        tau = float(rng.uniform(0.05, 2.0))
        base, _ = logit_norm_ce(h, y, tau)
        for scale in (0.1, 3.0, 100.0):
            scaled, _ = logit_norm_ce(scale * h, y, tau)
            assert abs(scaled - base) < 1e-9


def test_two_class_hand_value():
    # loss = ln(1 + exp(-(2-1)/(0.1*sqrt(5)))), frozen from a 50-digit
    # evaluation (0.0114 to two significant figures).
    loss, grad = logit_norm_ce(np.array([2.0, 1.0]), 0, 0.1)
    assert loss == pytest.approx(0.011358142385146810, rel=1e-12)
    np.testing.assert_allclose(
        grad, [-0.030304666016652980, 0.060609332033305959], rtol=1e-12
    )


def _fd_gradient(h, y, tau, step=1e-5):
    grad = np.zeros_like(h)
    for i in range(h.size):
        hp, hm = h.copy(), h.copy()
        hp[i] += step
        hm[i] -= step
        lp, _ = logit_norm_ce(hp, y, tau)
        lm, _ = logit_norm_ce(hm, y, tau)
        grad[i] = (lp - lm) / (2 * step)
    return grad


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(1)
    for _ in range(100):
        c = int(rng.integers(2, 12))
        h = rng.normal(size=c) * rng.uniform(0.5, 3.0)
        if np.linalg.norm(h) < 0.1:
            h += 1.0
        y = int(rng.integers(c))
        tau = float(rng.uniform(0.05, 1.0))
        _, grad = logit_norm_ce(h, y, tau)
        fd = _fd_gradient(h, y, tau)
        denom = max(np.linalg.norm(fd), 1e-12)
        assert np.linalg.norm(grad - fd) / denom < 1e-4


def test_degenerate_logits_rejected():
    with pytest.raises(DegenerateLogitsError):
        logit_norm_ce(np.zeros(3), 0, 0.1)


def test_logit_norm_ce_argument_checks():
    with pytest.raises(ValueError):
        logit_norm_ce(np.array([1.0]), 0, 0.1)
    with pytest.raises(ValueError):
        logit_norm_ce(np.array([1.0, 2.0]), 2, 0.1)


# ----------------------------------------------------------- linear head


def _separable_two_class(n=60, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 2)) * 0.2 + np.array([2.0, 0.0])
    b = rng.normal(size=(n, 2)) * 0.2 + np.array([-2.0, 0.0])
    x = l2_rows(np.vstack([a, b]))
    y = np.array([0] * n + [1] * n)
    return x, y


def test_train_reaches_separable_optimum():
    x, y = _separable_two_class()
    head = LinearHead.initialize(2, 2, seed=0)
    head = train_head(head, x, y, TrainConfig(seed=1))
    assert (predict(head, x) == y).mean() == 1.0


def test_zero_epochs_is_identity():
    x, y = _separable_two_class()
    head = LinearHead.initialize(2, 2, seed=0)
    out = train_head(head, x, y, TrainConfig(epochs=0, seed=1))
    assert out.weights.tobytes() == head.weights.tobytes()
    assert out.bias.tobytes() == head.bias.tobytes()


def test_training_is_deterministic():
    x, y = _separable_two_class()
    head = LinearHead.initialize(2, 2, seed=0)
    cfg = TrainConfig(epochs=20, seed=9)
    a = train_head(head, x, y, cfg)
    b = train_head(head, x, y, cfg)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.bias.tobytes() == b.bias.tobytes()


def test_train_rejects_out_of_range_labels():
    x, y = _separable_two_class()
    head = LinearHead.initialize(2, 2, seed=0)
    with pytest.raises(ValueError):
        train_head(head, x, y + 1, TrainConfig(seed=0))


def test_extension_preserves_old_logits():
    rng = np.random.default_rng(3)
    head = LinearHead(rng.normal(size=(3, 5)), rng.normal(size=3))
    grown = head.extended(2)
    assert grown.num_classes == 5
    x = rng.normal(size=(10, 5))
    np.testing.assert_array_equal(grown.logits(x)[:, :3], head.logits(x))
    np.testing.assert_array_equal(grown.logits(x)[:, 3:], 0.0)


def test_predict_one_hot_identity():
    head = LinearHead(np.eye(4), np.zeros(4))
    for k in range(4):
        assert predict(head, np.eye(4)[k][None, :])[0] == k


def test_predict_scale_invariant_without_bias():
    rng = np.random.default_rng(4)
    head = LinearHead(rng.normal(size=(5, 6)), np.zeros(5))
    x = rng.normal(size=(20, 6))
    np.testing.assert_array_equal(predict(head, x), predict(head, 7.5 * x))


def test_predict_matches_per_row_scan():
    rng = np.random.default_rng(5)
    head = LinearHead(rng.normal(size=(6, 4)), rng.normal(size=6))
    x = rng.normal(size=(40, 4))
    logits = x @ head.weights.T + head.bias
    expected = [max(range(6), key=lambda c: (logits[i, c], -c)) for i in range(40)]
    np.testing.assert_array_equal(predict(head, x), expected)


def test_predict_dimension_mismatch():
    head = LinearHead(np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        predict(head, np.zeros((2, 4)))


# ------------------------------------------------------ NCM, Mahalanobis


def _memory_from_means(means, covs=None):
    entries = []
    for i, mean in enumerate(np.atleast_2d(means)):
        cov = np.eye(len(mean)) if covs is None else covs[i]
        entries.append(
            ClusterGaussian(class_id=i, mean=np.asarray(mean, float), cov=cov, n=10, session=0)
        )
    return GaussianMemory(tuple(entries))


def test_ncm_exact_mean_hits_class():
    memory = _memory_from_means([[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]])
    for c in range(3):
        assert ncm_predict(memory, memory.entries[c].mean[None, :])[0] == c


def test_ncm_tie_goes_to_lower_class():
    memory = _memory_from_means([[0.0, 0.0], [2.0, 0.0]])
    assert ncm_predict(memory, np.array([[1.0, 0.0]]))[0] == 0


def test_ncm_matches_exhaustive_scan():
    rng = np.random.default_rng(6)
    means = rng.normal(size=(5, 3))
    memory = _memory_from_means(means)
    x = rng.normal(size=(50, 3))
    expected = [min(range(5), key=lambda c: ((xi - means[c]) ** 2).sum()) for xi in x]
    np.testing.assert_array_equal(ncm_predict(memory, x), expected)


def test_mahalanobis_reduces_to_ncm_for_isotropic():
    rng = np.random.default_rng(7)
    means = rng.normal(size=(4, 3))
    covs = [2.5 * np.eye(3)] * 4
    memory = _memory_from_means(means, covs)
    x = rng.normal(size=(60, 3))
    np.testing.assert_array_equal(mahalanobis_predict(memory, x), ncm_predict(memory, x))


def test_mahalanobis_hand_example():
    # Query (2,0): squared distance 4 to class 0 but 1 to class 1.
    memory = _memory_from_means(
        [[0.0, 0.0], [3.0, 0.0]], covs=[np.diag([1.0, 100.0]), np.eye(2)]
    )
    assert mahalanobis_predict(memory, np.array([[2.0, 0.0]]))[0] == 1


def test_mahalanobis_zero_distance_at_mean():
    memory = _memory_from_means([[1.0, 2.0], [5.0, 5.0]], covs=[np.diag([2.0, 0.5]), np.eye(2)])
    assert mahalanobis_predict(memory, np.array([[1.0, 2.0]]))[0] == 0


# --------------------------------------------------------------- Sinkhorn


def test_sinkhorn_uniform_fixed_point():
    q = sinkhorn_pseudolabels(np.full((6, 3), 0.25), iters=5)
    np.testing.assert_allclose(q, np.full((6, 3), 1.0 / 18.0), rtol=1e-12)


def _naive_sinkhorn(p, rounds):
    q = np.maximum(np.asarray(p, float), 1e-30)
    q = q / q.sum()
    b, k = q.shape
    for _ in range(rounds):
        q = q * (1.0 / b) / q.sum(axis=1, keepdims=True)
        q = q * (1.0 / k) / q.sum(axis=0, keepdims=True)
    return q


def test_sinkhorn_two_by_two_example():
    p = np.array([[0.9, 0.1], [0.1, 0.9]])
    q = sinkhorn_pseudolabels(p, iters=200, tol=1e-10)
    np.testing.assert_allclose(q.sum(axis=1), 0.5, atol=1e-6)
    np.testing.assert_allclose(q.sum(axis=0), 0.5, atol=1e-6)
    assert q[0, 0] > q[0, 1] and q[1, 1] > q[1, 0]
    np.testing.assert_allclose(q, _naive_sinkhorn(p, 200), rtol=1e-9)


def test_sinkhorn_marginals_within_tolerance():
    rng = np.random.default_rng(8)
    for _ in range(30):
        b = int(rng.integers(2, 64))
        k = int(rng.integers(2, min(9, b + 1)))
        p = rng.uniform(0.01, 1.0, size=(b, k))
        q = sinkhorn_pseudolabels(p, iters=2000, tol=1e-8)
        assert np.abs(q.sum(axis=1) - 1.0 / b).max() <= 1e-6
        assert np.abs(q.sum(axis=0) - 1.0 / k).max() <= 1e-6


def test_sinkhorn_reports_non_convergence():
    p = np.array([[1.0, 1e-25], [1.0, 1e-25], [1e-25, 1.0]])
    with pytest.raises(SinkhornError) as err:
        sinkhorn_pseudolabels(p, iters=2, tol=1e-15)
    assert err.value.achieved > 0


def test_sinkhorn_shape_checks():
    with pytest.raises(ValueError):
        sinkhorn_pseudolabels(np.ones((2, 3)))  # more columns than rows


# ----------------------------------------------------------- SeLa trainer


def test_sela_recovers_separated_clusters():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(80, 4)) * 0.1 + np.array([3.0, 0.0, 0.0, 0.0])
    b = rng.normal(size=(80, 4)) * 0.1 + np.array([-3.0, 0.0, 0.0, 0.0])
    x = l2_rows(np.vstack([a, b]))
    truth = np.array([0] * 80 + [1] * 80)
    head = LinearHead.initialize(2, 4, seed=3)
    head = train_head_sela(head, x, TrainConfig(epochs=60, seed=4))
    labels = predict(head, x)
    oracle = kmeans(x, 2, seed=0).labels
    agreement = max((labels == oracle).mean(), (labels == 1 - oracle).mean())
    assert agreement == 1.0
    acc = max((labels == truth).mean(), (labels == 1 - truth).mean())
    assert acc == 1.0


def test_sela_zero_learning_rate_keeps_head():
    rng = np.random.default_rng(10)
    x = l2_rows(rng.normal(size=(32, 3)))
    head = LinearHead.initialize(2, 3, seed=0)
    out = train_head_sela(head, x, TrainConfig(epochs=1, lr0=0.0, seed=0))
    assert out.weights.tobytes() == head.weights.tobytes()
    assert out.bias.tobytes() == head.bias.tobytes()


def test_softmax_rows_sum_to_one():
    from fccd.classifier import _softmax

    rng = np.random.default_rng(11)
    logits = rng.normal(size=(50, 7)) * rng.uniform(0.1, 50.0, size=(50, 1))
    probs = _softmax(logits)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert (probs >= 0).all()


def test_cosine_schedule_decays_from_lr0():
    cfg = TrainConfig(lr0=0.1, epochs=50)
    rates = [cfg.lr_at(e) for e in range(50)]
    assert rates[0] == pytest.approx(0.1)
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert rates[-1] < 0.001
