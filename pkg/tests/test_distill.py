import numpy as np
import pytest

from dlad.aggregation import SoftTargetSet
from dlad.client import evaluate_accuracy, train_client
from dlad.data import UnlabeledPool, sample_client_dataset, split_pool, synth_blobs
from dlad.distill import GlobalModel, median_last, run_comparison, supervised_distill, train_global
from dlad.errors import NotStochasticError, ShapeError
from dlad.rng import stream
from dlad.tensor import ModelSpec, TrainingHyper, backward, init_params

SPEC = ModelSpec(20, ((32, "relu"),), 10)
HYPER = TrainingHyper(epochs=12, batch_size=64, lr=3e-3)


@pytest.fixture(scope="module")
def world():
    full = synth_blobs(10, 20, 300, 0.08, seed=0)
    pool, rest = split_pool(full, 0.8, seed=1)
    test = synth_blobs(10, 20, 300, 0.08, seed=0).subset(np.arange(0, 3000, 5))
    return pool, rest, test


@pytest.fixture(scope="module")
def iid_client(world):
    _, rest, test = world
    data = sample_client_dataset(rest, np.full(10, 0.1), len(rest), 2)
    return train_client(data, SPEC, HYPER, seed=3, client_id=1, test=test)


def _targets(pool_len, rows, mode="average"):
    return SoftTargetSet(np.asarray(rows, dtype=float).reshape(pool_len, -1), mode, 0.05)


def test_single_teacher_is_recovered(world, iid_client):
    pool, _, test = world
    teacher_acc = evaluate_accuracy(SPEC, iid_client.model_params, test)
    targets = SoftTargetSet(iid_client.predict(pool.features), "average", 0.05)
    model, run = train_global(pool, targets, SPEC, HYPER, test, seed=4)
    assert abs(run.reported_accuracy() - teacher_acc) <= 0.03
    assert pool.label_reads == 0


def test_uniform_targets_give_chance(world):
    pool, _, test = world
    targets = _targets(len(pool), np.full((len(pool), 10), 0.1))
    _, run = train_global(pool, targets, SPEC, TrainingHyper(5, 64, 3e-3), test, seed=5)
    assert abs(run.reported_accuracy() - 0.1) <= 0.05


def test_deterministic_and_seed_sensitive(world, iid_client):
    pool, _, test = world
    targets = SoftTargetSet(iid_client.predict(pool.features), "average", 0.05)
    hyper = TrainingHyper(2, 128, 1e-3)
    a, _ = train_global(pool, targets, SPEC, hyper, test, seed=6)
    b, _ = train_global(pool, targets, SPEC, hyper, test, seed=6)
    c, _ = train_global(pool, targets, SPEC, hyper, test, seed=7)
    assert a.params.digest() == b.params.digest() != c.params.digest()


def test_records_layout(world, iid_client):
    pool, _, test = world
    targets = SoftTargetSet(iid_client.predict(pool.features), "dlad", 0.05)
    _, run = train_global(pool, targets, SPEC, TrainingHyper(3, 128, 1e-3), test, seed=6)
    assert [(r["epoch"], r["split"]) for r in run.records][:2] == [(1, "train"), (1, "test")]
    assert all(r["accuracy"] is None for r in run.records if r["split"] == "train")
    assert len(run.test_accuracies()) == 3


def test_rejects_bad_targets(world):
    pool, _, _ = world
    with pytest.raises(ShapeError):
        train_global(pool, _targets(3, np.full((3, 10), 0.1)), SPEC, HYPER, None, 0)
    with pytest.raises(NotStochasticError):
        train_global(pool, _targets(len(pool), np.full((len(pool), 10), 0.2)), SPEC, HYPER, None, 0)


def test_loss_decreases_on_separable_fixture():
    rng = stream(2)
    x = np.concatenate([rng.normal(0.2, 0.03, (60, 2)), rng.normal(0.8, 0.03, (60, 2))])
    pool = UnlabeledPool(x, np.repeat([0, 1], 60), 2)
    targets = _targets(120, np.eye(2)[np.repeat([0, 1], 60)])
    _, run = train_global(pool, targets, ModelSpec(2, (), 2), TrainingHyper(30, 20, 0.05), None, seed=3)
    losses = [r["loss"] for r in run.records]
    assert all(b < a for a, b in zip(losses, losses[1:]))


class TestSupervisedDistill:
    def test_lambda_zero_equals_pure_distillation(self, world, iid_client):
        _, rest, _ = world
        hyper = TrainingHyper(3, 64, 1e-3)
        sup = supervised_distill(rest, iid_client, SPEC, 0.0, hyper, seed=8)
        pool = UnlabeledPool(rest.features, rest.labels, rest.n_classes)
        plain, _ = train_global(pool, SoftTargetSet(iid_client.predict(rest.features), "average", 0.05),
                                SPEC, hyper, None, seed=8)
        assert sup.params.digest() == plain.params.digest()

    def test_large_lambda_follows_supervised_gradient(self, world, iid_client):
        _, rest, _ = world
        lam = 1e6
        params = init_params(SPEC, stream(9))
        x = rest.features[:64]
        onehot = rest.one_hot()[:64]
        target = iid_client.predict(x) + lam * onehot
        _, g_mix = backward(SPEC, params, x, "soft_ce", target / (1 + lam))
        _, g_sup = backward(SPEC, params, x, "soft_ce", onehot)
        a = np.concatenate([g.ravel() for g in g_mix.arrays()])
        b = np.concatenate([g.ravel() for g in g_sup.arrays()])
        assert a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) > 1 - 1e-9

    def test_negative_lambda_rejected(self, world, iid_client):
        _, rest, _ = world
        with pytest.raises(ValueError):
            supervised_distill(rest, iid_client, SPEC, -1.0, HYPER, 0)

    def test_teacher_width_checked(self, world):
        _, rest, _ = world
        narrow = GlobalModel(ModelSpec(20, (), 3), init_params(ModelSpec(20, (), 3), stream(0)))
        with pytest.raises(ShapeError):
            supervised_distill(rest, narrow, SPEC, 1.0, HYPER, 0)


def test_run_comparison_modes_share_seed(world, iid_client):
    pool, _, test = world
    runs = run_comparison(pool, [iid_client, iid_client], None, ["average"], SPEC, TrainingHyper(2, 128, 1e-3),
                          0.05, test, seed=10)
    assert set(runs) == {"average"}
    with pytest.raises(ValueError, match="unknown modes"):
        run_comparison(pool, [iid_client], None, ["median"], SPEC, HYPER, 0.05, test, 0)


class TestMedianLast:
    def test_window(self):
        assert median_last([0.1 * k for k in range(1, 11)]) == pytest.approx(0.55)
        assert median_last([9.0] * 5 + [0.1 * k for k in range(1, 11)]) == pytest.approx(0.55)

    def test_short_and_constant(self):
        assert median_last([0.3, 0.1, 0.2]) == 0.2
        assert median_last([0.7] * 12) == 0.7

    def test_empty(self):
        with pytest.raises(ValueError):
            median_last([])
