import json

import pytest

from rampc.config import ExperimentConfig, TrajectorySpec, load_config
from rampc.errors import ConfigurationError


def test_defaults_are_benchmark_setting():
    cfg = ExperimentConfig()
    assert (cfg.mpc.m, cfg.mpc.N, cfg.p, cfg.s, cfg.T) == (12, 15, 156, 36, 100)
    assert cfg.bounds.u_max == 2.0 and cfg.bounds.du_max == 0.8 and cfg.bounds.y_max == 4.0
    assert set(cfg.trajectories) == {"rampSaw", "rampStep", "sinusoid", "step"}


def test_json_roundtrip(tmp_path):
    cfg = ExperimentConfig().with_fir_length(8)
    assert cfg.p == 72
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_json()))
    assert load_config(path) == cfg
    assert set(cfg.to_json()) == {"bounds", "mpc", "trajectories", "solver", "simulation"}


def test_partial_document():
    cfg = ExperimentConfig.from_json(
        {"mpc": {"N": 10, "m": 8, "p": 40}, "solver": {"tol": 1e-7}, "trajectories": {"step": {"amplitude": 0.5}}}
    )
    assert cfg.mpc.N == 10 and cfg.mpc.tol == 1e-7 and cfg.p == 40
    assert cfg.trajectories == {"step": TrajectorySpec(0.5, 40)}


@pytest.mark.parametrize(
    "doc",
    [
        {"extra": {}},
        {"mpc": {"horizon": 3}},
        {"bounds": {"gain": 1}},
        {"mpc": {"m": 12, "p": 10}},
        {"simulation": {"T": 0}},
        {"solver": {"tol": -1.0}},
    ],
)
def test_bad_documents(doc):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(doc)
