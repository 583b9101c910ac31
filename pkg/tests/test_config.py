import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from taskloss.config import TASK_MODELS, ExperimentConfig
from taskloss.errors import ConfigError


def test_defaults_fill_in():
    cfg = ExperimentConfig.from_dict({"task": "credit", "model": "bce"})
    assert cfg.split["mode"] == "random"
    assert cfg.data["n_loans"] > 0
    assert cfg.train.train_threshold == cfg.criterion.p_d == 0.5
    rev = ExperimentConfig.from_dict({})
    assert rev.split["mode"] == "chronological" and rev.train.k == 100.0


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"train": {"batch_size": 0}}, "train.batch_size"),
        ({"train": {"lr_predictor": -1.0}}, "train.lr_predictor"),
        ({"train": {"momentum": 0.9}}, "train.momentum"),
        ({"train": {"k": 5.0}}, "train.k"),  # k belongs to the criterion block
        ({"criterion": {"k": 0.0}}, "criterion.k"),
        ({"criterion": {"p_d": 1.5}}, "criterion.p_d"),
        ({"criterion": {"alpha": "big"}}, "criterion.alpha"),
        ({"task": "weather"}, "task"),
        ({"task": "credit", "model": "topnet_mae"}, "model"),
        ({"models": ["mse", "mse"]}, "models"),
        ({"models": "mse"}, "models"),
        ({"data": {"source": "sql"}}, "data.source"),
        ({"data": {"n_companies": 0}}, "data.n_companies"),
        ({"data": {"source": "csv"}}, "data.path"),
        ({"data": {"source": "csv", "path": "/no/such.csv"}}, "data.path"),
        ({"surprise": 1}, "config.surprise"),
    ],
)
def test_field_errors(raw, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(raw)
    assert exc.value.field == field
    assert field in str(exc.value)


def test_bad_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "absent.json")


def test_csv_path_relative_to_config(tmp_path):
    (tmp_path / "loans.csv").write_text("x\n")
    (tmp_path / "c.json").write_text(json.dumps({"task": "credit", "data": {"source": "csv", "path": "loans.csv"}}))
    cfg = ExperimentConfig.load(tmp_path / "c.json")
    assert cfg.data["path"] == str(tmp_path / "loans.csv")


@st.composite
def raw_configs(draw):
    task = draw(st.sampled_from(["revenue", "credit"]))
    models = draw(st.lists(st.sampled_from(TASK_MODELS[task]), unique=True, max_size=4))
    train = draw(
        st.fixed_dictionaries(
            {},
            optional={
                "epochs": st.integers(1, 50),
                "batch_size": st.integers(1, 256),
                "lr_predictor": st.floats(1e-6, 1e-1),
                "lr_estimator": st.floats(1e-6, 1e-1),
                "n_pre_iters": st.integers(0, 500),
                "early_stop_patience": st.integers(1, 20),
                "seeds": st.lists(st.integers(0, 10**6), min_size=1, max_size=5),
                "predictor_hidden": st.lists(st.integers(1, 64), min_size=1, max_size=3),
                "discrepancy": st.sampled_from(["square", "absolute"]),
            },
        )
    )
    criterion = draw(
        st.fixed_dictionaries(
            {}, optional={"k": st.floats(0.5, 1e4), "p_d": st.floats(0, 1), "gamma": st.floats(0.1, 10)}
        )
    )
    raw = {"task": task, "models": models, "train": train, "criterion": criterion}
    if models and draw(st.booleans()):
        raw["model"] = models[0]
    if draw(st.booleans()):
        raw["out"] = draw(st.text("abc/_", min_size=1, max_size=10))
    return raw


@given(raw_configs())
def test_round_trip(raw):
    cfg = ExperimentConfig.from_dict(raw)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()
