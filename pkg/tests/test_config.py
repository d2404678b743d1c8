import pytest
from hypothesis import given, settings, strategies as st

from llp.config import ExperimentConfig, PropagationConfig, TrainSchedule
from llp.errors import ConfigurationError


def test_default_values():
    p, s = PropagationConfig(), TrainSchedule()
    assert (p.k, p.t, p.tau) == (10, 25, 0.07)
    assert (s.base_lr, s.sgd_momentum, s.weight_decay, s.lr_drop_factor, s.patience) == (0.03, 0.9, 1e-4, 10.0, 5)


def test_roundtrip_is_lossless():
    cfg = ExperimentConfig(label_fraction=0.05, input_scale=None, seed=4,
                           schedule=TrainSchedule(hidden=(8, 4), warmup_lr=1e-3))
    assert ExperimentConfig.loads(cfg.dumps()) == cfg


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 1.0), st.floats(0.001, 1.0), st.integers(1, 100), st.booleans(), st.integers(0, 2**31))
def test_roundtrip_property(p, q, k, local, seed):
    cfg = ExperimentConfig(label_fraction=p, unlabeled_fraction=q, seed=seed,
                           propagation=PropagationConfig(k=k, local_weighting=local))
    assert ExperimentConfig.loads(cfg.dumps()) == cfg


@pytest.mark.parametrize("change", [
    dict(label_fraction=0.0), dict(unlabeled_fraction=1.5), dict(input_scale=-1.0),
    dict(propagation=PropagationConfig(k=0)), dict(propagation=PropagationConfig(cadence="hourly")),
    dict(schedule=TrainSchedule(sgd_momentum=1.0)), dict(schedule=TrainSchedule(base_lr=0.0)),
])
def test_invalid_values_rejected(change):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**change).validate()


def test_unknown_field_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"colour": "red"})
