import numpy as np
import pytest

from libvec.errors import ConfigError, DataError, NumericalError
from libvec.train import (TrainConfig, _sgd_pass, init_matrix, load_binary, load_tsv,
                          pair_loss_and_grads, save_binary, save_tsv, sigmoid, train)


def _loss(u, v, y):
    """Independent BCE of sigmoid(u.v), no clamping needed away from saturation."""
    p = 1.0 / (1.0 + np.exp(-np.dot(u, v)))
    return -(y * np.log(p) + (1 - y) * np.log(1 - p))


def _fixed_sampler(neg):
    neg = np.asarray(neg)

    def sampler(count, rng):
        return neg[rng.integers(0, len(neg), size=count)]
    return sampler


def test_init_matrix_bounds_and_determinism():
    m = init_matrix(50, 16, 3)
    assert m.shape == (50, 16)
    assert np.all(np.abs(m) <= 0.5 / 16)
    assert np.array_equal(m, init_matrix(50, 16, 3))
    assert not np.array_equal(m, init_matrix(50, 16, 4))
    with pytest.raises(ConfigError):
        init_matrix(1, 16, 0)


def test_sigmoid_stable():
    x = np.array([-1000.0, -1.0, 0.0, 1.0, 1000.0])
    s = sigmoid(x)
    assert np.all(np.isfinite(s))
    assert s[2] == 0.5 and s[0] == 0.0 and s[4] == 1.0
    assert s[1] == pytest.approx(1 / (1 + np.e)) and s[3] == pytest.approx(np.e / (1 + np.e))


def test_loss_at_zero_is_ln2():
    u = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    for y in (0, 1):
        loss, gu, gv = pair_loss_and_grads(u, v, y)
        assert loss == pytest.approx(np.log(2), rel=1e-12)
        assert gu == pytest.approx((0.5 - y) * v) and gv == pytest.approx((0.5 - y) * u)


def test_zero_vectors_give_zero_grads():
    z = np.zeros(4)
    loss, gu, gv = pair_loss_and_grads(z, z, 1)
    assert loss == pytest.approx(np.log(2))
    assert not gu.any() and not gv.any()


def test_loss_clamped_at_saturation():
    u = np.full(4, 100.0)
    loss, gu, _ = pair_loss_and_grads(u, u, 0)
    assert loss == pytest.approx(-np.log(1e-7), rel=1e-6)
    assert np.all(np.isfinite(gu))


def test_grads_match_finite_differences():
    rng = np.random.default_rng(11)
    eps = 1e-4
    for _ in range(20):
        u, v = rng.normal(size=6), rng.normal(size=6)
        y = int(rng.integers(2))
        _, gu, gv = pair_loss_and_grads(u, v, y)
        num = np.array([(_loss(u + eps * e, v, y) - _loss(u - eps * e, v, y)) / (2 * eps) for e in np.eye(6)])
        np.testing.assert_allclose(gu, num, rtol=1e-6, atol=1e-9)
        num = np.array([(_loss(u, v + eps * e, y) - _loss(u, v - eps * e, y)) / (2 * eps) for e in np.eye(6)])
        np.testing.assert_allclose(gv, num, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("y", [0.0, 1.0])
def test_kernel_step_matches_gradients(y):
    rng = np.random.default_rng(2)
    W = rng.normal(scale=0.3, size=(3, 5))
    C = rng.normal(scale=0.3, size=(3, 5))
    lr = 0.05
    loss, gu, gv = pair_loss_and_grads(W[0], C[2], int(y))
    W2, C2 = W.copy(), C.copy()
    got_loss, bad = _sgd_pass(W2, C2, np.array([0]), np.array([2]), np.array([y]), lr, lr, 0.0, 1.0)
    assert bad == -1 and got_loss == pytest.approx(loss, rel=1e-12)
    np.testing.assert_allclose(W2[0], W[0] - lr * gu, rtol=1e-12)
    np.testing.assert_allclose(C2[2], C[2] - lr * gv, rtol=1e-12)
    assert np.array_equal(W2[1:], W[1:]) and np.array_equal(C2[:2], C[:2])


def test_kernel_tied_step_uses_old_rows():
    rng = np.random.default_rng(5)
    W = rng.normal(scale=0.3, size=(2, 4))
    lr = 0.1
    _, gu, gv = pair_loss_and_grads(W[0], W[1], 1)
    W2 = W.copy()
    _sgd_pass(W2, W2, np.array([0]), np.array([1]), np.array([1.0]), lr, lr, 0.0, 1.0)
    np.testing.assert_allclose(W2[0], W[0] - lr * gu, rtol=1e-12)
    np.testing.assert_allclose(W2[1], W[1] - lr * gv, rtol=1e-12)


def test_kernel_linear_decay():
    # Zero vectors have zero gradient; use a known pair to read off the rate.
    W = np.zeros((2, 2))
    C = np.zeros((2, 2))
    W[0] = [1.0, 0.0]
    C[1] = [0.0, 1.0]
    # dot = 0 -> s = 0.5, label 1 -> grad on W[0] = -0.5 * C[1]
    _sgd_pass(W, C, np.array([0]), np.array([1]), np.array([1.0]), 0.025, 0.0001, 5.0, 10.0)
    lr = 0.025 - (0.025 - 0.0001) * 5 / 10
    np.testing.assert_allclose(W[0], [1.0, 0.5 * lr], rtol=1e-12)


def test_toy_training_pulls_positives_together():
    pos = np.array([[0, 1], [2, 3]])
    sampler = _fixed_sampler([[0, 2], [0, 3], [1, 2], [1, 3]])
    cfg = TrainConfig(dim=8, epochs=200, learning_rate=0.5, min_learning_rate=0.01, seed=4)
    res = train(pos, sampler, cfg, n_rows=5)
    m = res.matrix
    cos = lambda a, b: m[a] @ m[b] / np.linalg.norm(m[a]) / np.linalg.norm(m[b])
    assert cos(0, 1) > 0.9 and cos(2, 3) > 0.9
    assert cos(0, 2) < cos(0, 1)
    # row 4 never appears in any pair
    seeds = np.random.SeedSequence(4).spawn(3)
    assert np.array_equal(m[4], init_matrix(5, 8, seeds[0])[4])


def test_training_is_deterministic_and_balanced():
    pos = np.array([[0, 1], [1, 2], [0, 1]])
    sampler = _fixed_sampler([[0, 3], [2, 3]])
    cfg = TrainConfig(dim=4, epochs=3, seed=9)
    a, b = train(pos, sampler, cfg, 4), train(pos, sampler, cfg, 4)
    assert np.array_equal(a.matrix, b.matrix) and a.epoch_losses == b.epoch_losses
    assert a.positives_per_epoch == a.negatives_per_epoch == 3
    assert a.n_updates == 3 * 2 * 3
    c = train(pos, sampler, TrainConfig(dim=4, epochs=3, seed=10), 4)
    assert not np.array_equal(a.matrix, c.matrix)


def test_untied_keeps_context_matrix():
    pos = np.array([[0, 1]])
    res = train(pos, _fixed_sampler([[0, 2]]), TrainConfig(dim=4, epochs=2, tied=False), 3)
    assert res.context_matrix is not None and res.context_matrix.shape == (3, 4)


def test_loss_decreases_on_cluster_corpus(cluster_model):
    losses = cluster_model[1].epoch_losses
    assert len(losses) == 5
    for prev, cur in zip(losses[:3], losses[1:3]):
        assert cur <= prev * 1.05


def test_numerical_abort():
    pos = np.array([[0, 1]])
    sampler = _fixed_sampler([[0, 2]])
    with pytest.raises(NumericalError, match="learning rate"):
        train(pos, sampler, TrainConfig(dim=4, epochs=1), 3, init=np.full((3, 4), 1e200))


def test_train_input_validation():
    sampler = _fixed_sampler([[0, 2]])
    with pytest.raises(DataError):
        train(np.empty((0, 2)), sampler, TrainConfig(dim=4), 3)
    with pytest.raises(DataError):
        train(np.array([[1, 1]]), sampler, TrainConfig(dim=4), 3)
    with pytest.raises(DataError):
        train(np.array([[0, 5]]), sampler, TrainConfig(dim=4), 3)
    with pytest.raises(ConfigError):
        TrainConfig(negative_ratio=2.0)
    with pytest.raises(ConfigError):
        TrainConfig(dim=1)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.01, min_learning_rate=0.1)


def test_hogwild_runs():
    pos = np.array([[0, 1], [2, 3]] * 50)
    sampler = _fixed_sampler([[0, 2], [1, 3]])
    res = train(pos, sampler, TrainConfig(dim=4, epochs=2, workers=2), 4)
    assert np.all(np.isfinite(res.matrix)) and len(res.epoch_losses) == 2


def test_embedding_files_roundtrip(tmp_path):
    names = ["numpy", "@scope/pkg", "ünïcode"]
    m = np.random.default_rng(0).normal(size=(3, 5))
    save_tsv(tmp_path / "e.tsv", names, m)
    n2, m2 = load_tsv(tmp_path / "e.tsv")
    assert n2 == names and np.allclose(m2, m, rtol=1e-8)
    assert (tmp_path / "e.tsv").read_text(encoding="utf-8").splitlines()[0] == "3 5"
    save_binary(tmp_path / "e.bin", names, m)
    n3, m3 = load_binary(tmp_path / "e.bin")
    assert n3 == names and np.array_equal(m3, m.astype(np.float32).astype(float))
    assert (tmp_path / "e.bin").stat().st_size == 8 + sum(4 + len(n.encode()) + 20 for n in names)


def test_embedding_files_reject_corruption(tmp_path):
    names = ["a", "b"]
    save_binary(tmp_path / "e.bin", names, np.ones((2, 3)))
    data = (tmp_path / "e.bin").read_bytes()
    (tmp_path / "e.bin").write_bytes(data[:-2])
    with pytest.raises(DataError):
        load_binary(tmp_path / "e.bin")
    with pytest.raises(DataError):
        save_tsv(tmp_path / "x.tsv", names, np.array([[1.0, np.nan, 0], [0, 0, 0]]))
    (tmp_path / "bad.tsv").write_text("2 3\na\t1\t2\t3\n")
    with pytest.raises(DataError):
        load_tsv(tmp_path / "bad.tsv")
    with pytest.raises(DataError):
        load_tsv(tmp_path / "missing.tsv")
