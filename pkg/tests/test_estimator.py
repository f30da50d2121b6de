import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rnnfilter.cells import init_params
from rnnfilter.estimator import RNNForecaster
from rnnfilter.predict import fast_predict, moving_window_predict
from rnnfilter.signal import DatasetSpec, build_dataset, sample_series


def small_data(n=20, seed=0):
    ds = build_dataset(DatasetSpec(segments_per_wave=n, length_min=5, length_max=12, seed=seed))
    return [ex.input.points[:, 0] for ex in ds], np.array([ex.target[0] for ex in ds])


def test_params_round_trip():
    est = RNNForecaster(cell="gated", n_neurons=4, epochs=3, random_state=7)
    params = est.get_params()
    assert params["cell"] == "gated" and params["n_neurons"] == 4 and params["random_state"] == 7
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(n_neurons=6)
    assert est.n_neurons == 6


def test_not_fitted():
    with pytest.raises(NotFittedError):
        RNNForecaster().predict([np.zeros(5)])
    with pytest.raises(NotFittedError):
        RNNForecaster().forecast(np.zeros(5), 3)


def test_fit_predict_deterministic():
    X, y = small_data()
    est = RNNForecaster(cell="lstm", n_neurons=3, epochs=2, random_state=1).fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (len(X),)
    assert len(est.history_) == 2
    again = RNNForecaster(cell="lstm", n_neurons=3, epochs=2, random_state=1).fit(X, y)
    assert np.array_equal(again.predict(X), pred)
    assert np.isfinite(est.score(X, y))


def test_predict_matches_single_readouts():
    est = RNNForecaster.from_model(init_params("basic", 3, 1, 0))
    X = [np.linspace(0, 1, 5), np.linspace(0, 1, 9), np.linspace(1, 0, 5)]
    pred = est.predict(X)
    for k, x in enumerate(X):
        assert pred[k] == pytest.approx(moving_window_predict(est.model_, x, 1).values[0, 0], rel=1e-13)


def test_forecast_methods():
    model = init_params("lstm", 4, 1, 2)
    est = RNNForecaster.from_model(model)
    window = sample_series("sine", 0, 30).points[:, 0]
    np.testing.assert_array_equal(est.forecast(window, 10), fast_predict(model, window, 10).values[:, 0])
    np.testing.assert_array_equal(est.forecast(window, 10, method="window"),
                                  moving_window_predict(model, window, 10).values[:, 0])
    with pytest.raises(ValueError):
        est.forecast(window, 10, method="other")


def test_fit_validation():
    X, y = small_data(5)
    with pytest.raises(ValueError):
        RNNForecaster(cell="rnn").fit(X, y)
    with pytest.raises(ValueError):
        RNNForecaster(epochs=1).fit([], [])
    with pytest.raises(ValueError):
        RNNForecaster(validation_fraction=1.5, epochs=1).fit(X, y)
    with pytest.raises(ValueError):
        RNNForecaster(epochs=1).fit(X, np.zeros((len(X), 2)))


def test_equal_length_array_input():
    X = np.random.default_rng(0).normal(size=(12, 6))
    est = RNNForecaster(n_neurons=2, epochs=1).fit(X, X[:, -1])
    assert est.predict(X).shape == (12,)
