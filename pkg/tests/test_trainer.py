import csv
import math

import numpy as np
import pytest

from addloss import geometry as geo
from addloss.data import Dataset, SynthConfig, generate_synthetic
from addloss.errors import ConfigConflict, NonFiniteActivation, NonFiniteLoss
from addloss.model import ModelConfig, MlpParams, init_params
from addloss.trainer import TrainConfig, ablation_sweep, evaluate, train

SMALL = ModelConfig(hidden=(32,), embed_dim=8)


@pytest.fixture(scope="module")
def blobs():
    return generate_synthetic(SynthConfig(classes=3, dim=4, per_class=40, spread=0.5,
                                          separation=3.0, seed=1))


def params_equal(a: MlpParams, b: MlpParams) -> bool:
    return all(np.array_equal(v, b.named_arrays()[k]) for k, v in a.named_arrays().items())


def test_zero_weights_bit_equal_to_ce_only(blobs):
    pa, ra = train(blobs, SMALL, TrainConfig(epochs=3, seed=4, weights=(0, 0, 0, 0)))
    pb, rb = train(blobs, SMALL, TrainConfig(epochs=3, seed=4, loss_mode="none"))
    assert params_equal(pa, pb)
    assert [s.ce for s in ra.steps] == [s.ce for s in rb.steps]
    assert all(s.add == 0.0 for s in ra.steps)


def test_soft_zero_weights_bit_equal_to_ce_only(blobs):
    pa, _ = train(blobs, SMALL, TrainConfig(epochs=2, loss_mode="soft", lambda_mu=0.0,
                                            lambda_sigma_p=0.0))
    pb, _ = train(blobs, SMALL, TrainConfig(epochs=2, loss_mode="none"))
    assert params_equal(pa, pb)


def test_learns_separable_blobs(blobs):
    _, rec = train(blobs, ModelConfig(), TrainConfig(epochs=25, weights=(1, 1, 1, 1)))
    assert rec.final_accuracy > 0.9


def test_loss_decomposition(blobs):
    _, rec = train(blobs, SMALL, TrainConfig(epochs=2, weights=(1, 0.5, 2, 0.25)))
    for s in rec.steps:
        assert abs(s.total - (s.ce + s.add)) <= 1e-9
        if s.terms:
            assert abs(s.add - sum(s.terms.values())) <= 1e-9


def test_batch_of_two_with_singleton_classes():
    ds = Dataset(np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 0.5]]),
                 geo.one_hot([0, 1, 2, 3], 4), ("a", "b", "c", "d"))
    _, rec = train(ds, SMALL, TrainConfig(epochs=3, batch_size=2, eval_fraction=0.0,
                                          weights=(1, 1, 1, 1)))
    assert all(math.isfinite(s.total) for s in rec.steps)
    assert rec.geometry is None  # no class has two rows


def test_soft_mode_with_mixup(blobs):
    _, rec = train(blobs, SMALL, TrainConfig(epochs=2, loss_mode="soft", mixup_alpha=0.4))
    assert all(math.isfinite(s.total) for s in rec.steps)


def test_reproducible(blobs):
    cfg = TrainConfig(epochs=2, seed=9)
    pa, ra = train(blobs, SMALL, cfg)
    pb, rb = train(blobs, SMALL, cfg)
    assert params_equal(pa, pb)
    assert ra.final_accuracy == rb.final_accuracy
    pc, _ = train(blobs, SMALL, TrainConfig(epochs=2, seed=10))
    assert not params_equal(pa, pc)


def test_mixup_with_hard_mode_conflicts():
    with pytest.raises(ConfigConflict):
        TrainConfig(mixup_alpha=0.2)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(loss_mode="triplet")


def test_non_finite_loss_is_reported(blobs, monkeypatch):
    import addloss.trainer as tr

    real = tr.cross_entropy
    calls = []

    def flaky(probs, labels):
        loss, grad = real(probs, labels)
        calls.append(1)
        return (math.nan if len(calls) == 4 else loss), grad

    monkeypatch.setattr(tr, "cross_entropy", flaky)
    with pytest.raises(NonFiniteLoss) as info:
        train(blobs, SMALL, TrainConfig(epochs=3))
    assert info.value.step == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverging_weights_raise_activation_error(blobs):
    with pytest.raises(NonFiniteActivation):
        train(blobs, SMALL, TrainConfig(epochs=3, optimizer="sgd", learning_rate=1e300,
                                        weight_decay=0.0))


# evaluate ----------------------------------------------------------------

def _fixed_head(n_classes, dim=2):
    """Identity extractor with a head that copies the unit embedding to the logits."""
    return MlpParams(weights=[np.eye(dim)], biases=[np.zeros(dim)],
                     head_weight=np.eye(dim)[:, :n_classes] * 10, head_bias=np.zeros(n_classes))


def test_evaluate_perfect():
    ds = Dataset(np.array([[1.0, 0.0], [2.0, 0.1], [0.0, 1.0], [0.1, 3.0]]),
                 geo.one_hot([0, 0, 1, 1], 2), ("a", "b"))
    acc, rep = evaluate(_fixed_head(2), ds)
    assert acc == 1.0
    assert rep.classes == (0, 1)


def test_evaluate_three_of_four():
    ds = Dataset(np.array([[1.0, 0.0], [2.0, 0.1], [0.0, 1.0], [3.0, 0.1]]),
                 geo.one_hot([0, 0, 1, 1], 2), ("a", "b"))
    assert evaluate(_fixed_head(2), ds)[0] == 0.75


def test_evaluate_uniform_logits_near_chance(rng):
    ds = generate_synthetic(SynthConfig(classes=4, dim=3, per_class=500, seed=2))
    p = init_params(SMALL, 3, 4, rng)
    p.head_weight[:] = 0.0
    # argmax over tied logits picks class 0 every time
    assert evaluate(p, ds)[0] == pytest.approx(0.25, abs=1e-12)


# ablation ----------------------------------------------------------------

def test_ablation_rows_and_single_run_equivalence(blobs, tmp_path):
    base = TrainConfig(epochs=1)
    tab = ablation_sweep(blobs, SMALL, base, geo.DEFAULT_ABLATION, [0])
    assert tab.tags() == [w.tag for w in geo.DEFAULT_ABLATION]
    _, rec = train(blobs, SMALL, TrainConfig(epochs=1, weights=(1, 1, 1, 1), seed=0))
    assert tab.rows[-1].accuracy == rec.final_accuracy
    assert tab.rows[-1].scores == rec.geometry.scores()
    tab.write_csv(tmp_path / "a.csv")
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda", "seed", "accuracy", "intra_clustering", "intra_equidistance",
                       "inter_separation", "inter_equidistance"]
    assert len(rows) == 7


def test_ablation_summary_uses_sample_std(blobs):
    tab = ablation_sweep(blobs, SMALL, TrainConfig(epochs=1), ["1111"], [0, 1])
    a, b = (r.accuracy for r in tab.rows)
    s = tab.summary()["1,1,1,1"]["accuracy"]
    assert s["mean"] == pytest.approx((a + b) / 2)
    assert s["std"] == pytest.approx(abs(a - b) / math.sqrt(2))


def test_ablation_parallel_matches_sequential(blobs):
    seq = ablation_sweep(blobs, SMALL, TrainConfig(epochs=1), ["1000", "0001"], [0, 1])
    par = ablation_sweep(blobs, SMALL, TrainConfig(epochs=1), ["1000", "0001"], [0, 1], workers=2)
    assert [(r.tag, r.seed, r.accuracy) for r in seq.rows] == \
        [(r.tag, r.seed, r.accuracy) for r in par.rows]
