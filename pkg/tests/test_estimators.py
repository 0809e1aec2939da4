import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vodepth.estimators import SparseDensifier, VODepthEstimator
from vodepth.synth import generate_dataset


def test_params_round_trip():
    est = VODepthEstimator(epochs=3, ablation=("no_prior",), seed=7)
    p = est.get_params()
    assert p["epochs"] == 3 and p["ablation"] == ("no_prior",)
    c = clone(est)
    assert c.get_params() == p
    assert est.set_params(lr=1e-3).lr == 1e-3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        VODepthEstimator().predict(generate_dataset(1, size=(16, 32)))


def test_validation(tiny_dataset):
    with pytest.raises(ValueError, match="empty"):
        VODepthEstimator().fit([])
    with pytest.raises(TypeError):
        VODepthEstimator().fit([1, 2])
    with pytest.raises(ValueError, match="divisible"):
        VODepthEstimator().fit(generate_dataset(1, size=(24, 40)))
    mixed = [tiny_dataset[0], generate_dataset(1, size=(16, 32))[0]]
    with pytest.raises(ValueError, match="differ"):
        VODepthEstimator().fit(mixed)


def test_fit_predict_score_save(tmp_path, tiny_dataset):
    est = VODepthEstimator(epochs=1, batch_size=3, max_steps=2).fit(tiny_dataset)
    assert est.n_steps_ == 2
    pred = est.predict(tiny_dataset[:2])
    assert pred.shape == (2, 32, 64)
    assert est.score(tiny_dataset) == -est.evaluate(tiny_dataset).abs_rel
    est.save(tmp_path / "e.ck")
    back = VODepthEstimator.load(tmp_path / "e.ck")
    np.testing.assert_array_equal(back.predict(tiny_dataset[:2]), pred)


def test_densifier(tiny_dataset):
    d = SparseDensifier(steps=3, batch_size=2).fit(tiny_dataset)
    assert len(d.log_) == 3 and set(d.log_[0]) >= {"in_L", "in_R"}
    dd = d.transform(tiny_dataset[:2])
    assert dd.shape == (2, 32, 64)
    assert np.array_equal(d.transform([tiny_dataset[0].sd_left]), dd[:1])
