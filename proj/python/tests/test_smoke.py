import json
import math

import numpy as np
import pytest

import mscib


def test_metric_examples():
    truth = [0, 0, 1, 1]
    assert mscib.clustering_accuracy(truth, [1, 1, 0, 0]) == 1.0
    assert mscib.clustering_accuracy(truth, [0, 1, 0, 1]) == 0.5
    assert abs(mscib.nmi(truth, [0, 1, 0, 1])) < 1e-15
    assert mscib.ari(truth, [0, 1, 0, 1]) == pytest.approx(-0.5)
    with pytest.raises(mscib.InvalidArgument):
        mscib.nmi(truth, [0])


def test_losses():
    eye = np.eye(2)
    assert mscib.pair_contrastive(eye, eye, 1.0) == pytest.approx(-math.log(math.e / (math.e + 2)))
    assert mscib.consistent_contrastive(eye, eye, 1.0) == pytest.approx(-1.0)
    uniform = np.full((5, 4), 0.25)
    assert mscib.entropy_regularizer([uniform, uniform]) == pytest.approx(-2 * math.log(4))
    assert mscib.gaussian_kl(np.ones((1, 1)), np.ones((1, 1))) == 0.5


def test_synthetic_and_kmeans():
    views, labels = mscib.generate_synthetic(seed=3)
    again, labels2 = mscib.generate_synthetic(seed=3)
    assert [v.shape for v in views] == [(300, 20), (300, 30)]
    assert all(np.array_equal(a, b) for a, b in zip(views, again))
    assert labels == labels2
    norm = mscib.normalize(views, "min-max")
    assert norm[0].min() == 0.0 and norm[0].max() == 1.0
    pred, inertia = mscib.kmeans(views[0], 3, seed=1)
    assert mscib.clustering_accuracy(labels, pred) >= 0.95
    assert inertia > 0
    report = mscib.evaluate(views[0], labels, 3, runs=3)
    assert report["acc"] >= 0.95 and report["runs"] == 3


def test_train_eval_embed(tmp_path):
    config = {
        "seed": 2,
        "synthetic.n_samples": 60,
        "synthetic.n_clusters": 3,
        "synthetic.view_dims": [6, 5],
        "synthetic.latent_dim": 4,
        "model.latent_dim": 4,
        "model.consistent_dim": 4,
        "model.hidden": [16],
        "model.head_hidden": [8],
        "train.pretrain_epochs": 3,
        "train.epochs": 4,
        "train.batch_size": 20,
        "train.eval_every": 2,
        "train.eval_runs": 2,
        "eval.runs": 2,
    }
    result = mscib.train(config, out=tmp_path)
    assert len(result["history"]) == 4
    assert "acc" in result["history"][1]
    metrics = json.loads(open(result["metrics_file"]).read())
    assert set(metrics) == {"X^(1)", "X^(2)", "Z^(1)", "Z^(2)", "Z", "metadata"}

    z = mscib.embed(config, result["checkpoint"], "Z", out=tmp_path)
    assert z.shape == (60, 4)
    z1 = mscib.embed(config, result["checkpoint"], "Z^(1)", out=tmp_path)
    assert z1.shape == (60, 4)
    with pytest.raises(mscib.ConfigError):
        mscib.embed(config, result["checkpoint"], "Z^(9)", out=tmp_path)

    path = mscib.evaluate_checkpoint(config, result["checkpoint"], out=tmp_path)
    assert json.loads(open(path).read())["Z"]["runs"] == 2


def test_bad_config(tmp_path):
    with pytest.raises(mscib.ConfigError):
        mscib.train({"train.epochs": -1}, out=tmp_path)
