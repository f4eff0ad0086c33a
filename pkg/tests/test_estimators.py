import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from seisgrid.estimators import RetrofitOptimizer, RiskAssessor


def test_get_params_and_clone(inputs):
    est = RiskAssessor(inputs, seed=3, min_samples=20)
    params = est.get_params()
    assert params["seed"] == 3 and params["min_samples"] == 20
    twin = clone(est).set_params(seed=4)
    assert twin.seed == 4 and est.seed == 3


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        RiskAssessor().predict([None])
    with pytest.raises(NotFittedError):
        RetrofitOptimizer().transform()


def test_risk_assessor_fit_predict(inputs):
    est = RiskAssessor(inputs, min_samples=30, max_samples=60).fit()
    assert est.eafl_ > 0 and len(est.stats_) == 6
    pred = est.predict([None, ["bus:13"]])
    assert pred[0] == est.eafl_
    assert pred[1] != pred[0]


def test_retrofit_optimizer(inputs):
    opt = RetrofitOptimizer(1.5, inputs, population_size=8, generations=2, elite_count=2, fitness_samples=10)
    x = opt.fit().transform()
    assert x.dtype == np.int8 and x.shape == (56,)
    assert opt.plan_.cost_musd <= 1.5 and opt.ga_params().population_size == 8
