import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qtp.core import TimeGrid
from qtp.estimators import PairArrivalModel, ScatterChainModel, SingleArrivalModel, arrival_window, make_kernel
from qtp.probability import p1_time


def test_hyperparameters_follow_the_estimator_protocol():
    model = SingleArrivalModel(mass=0.5, kernel={"kind": "kallen_lehmann", "mu0_sq": 1.0, "width": 2.0})
    params = model.get_params()
    assert params["mass"] == 0.5
    twin = clone(model).set_params(momentum=20.0)
    assert twin.momentum == 20.0 and model.momentum == 50.0


def test_predict_before_fit_raises():
    with pytest.raises(NotFittedError):
        SingleArrivalModel().predict([1.0])


def test_predict_matches_the_tabulated_density():
    model = SingleArrivalModel(mass=1.0, momentum=10.0, detector_position=20.0, n_momentum=1024).fit()
    g = TimeGrid(*model.default_window(), 201)
    dens = model.density(g)
    np.testing.assert_allclose(model.predict(g.nodes[:, None]), dens.values, atol=1e-14)
    assert dens.mass == pytest.approx(1.0, abs=1e-4)


def test_pair_predict_matches_p1():
    model = PairArrivalModel(mass=0.0, momentum=50.0, separation=3.0, detector_position=30.0).fit()
    g = TimeGrid(*model.default_window(), 101)
    np.testing.assert_allclose(model.predict(g.nodes), model.p1(g).values, atol=1e-14)


def test_arrival_window_contains_both_packets():
    lo, hi = arrival_window(30.0, 50.0, 1.0, 0.0, separation=4.0)
    assert lo < 26.0 < 30.0 < hi


def test_kernel_factory():
    assert make_kernel({"kind": "constant", "c": 0.2})(1.0, 2.0) == pytest.approx(0.4)


@pytest.fixture(scope="module")
def chain():
    return ScatterChainModel().fit()


def test_scatter_predict_uses_the_modified_localization(chain):
    g = TimeGrid(-20, 20, 41)
    np.testing.assert_allclose(chain.predict(g.nodes),
                               p1_time(chain.state_, chain.operator_.localization_star(), 0.0, 1.0, g,
                                       signed=True).values, atol=1e-14)


def test_scatter_windows_include_the_displaced_component():
    (lo, hi), _ = ScatterChainModel(state="bimodal", separation=12.0).default_windows()
    (lo0, hi0), _ = ScatterChainModel().default_windows()
    assert hi == pytest.approx(hi0) and lo < lo0
