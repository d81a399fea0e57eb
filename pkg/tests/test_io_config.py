import json

import numpy as np
import pytest

from pkf.config import load_config, parse_config
from pkf.demos import DEMOS, PEND_F, get_demo, harmonic_oscillator, pendulum_closed_loop
from pkf.errors import ConfigError, InfeasibleSchedule, SchemaError, StaleGains, UnknownDemo
from pkf.io import load_gains, load_model, save_gains, save_model
from pkf.kalman import kalman_gains
from pkf.lgssm import ModelSpec
from pkf.optimizer import solve_pkf


def cfg_text(**fields):
    base = {"schema_version": 1, "model": "harmonic-oscillator", "filters": ["kalman"]}
    base.update(fields)
    return json.dumps(base, indent=2)


def test_demo_constants():
    ho = harmonic_oscillator()
    assert ho.T == 255
    assert np.allclose(ho.A, [[1.0, 5e-3], [-1e-2, 1.0]])
    assert np.allclose(ho.C, [[1.0, -0.5]]) and np.allclose(ho.P0, 0.8 * np.eye(2))
    pend = get_demo("pendulums")
    assert pend.n_x == 8 and pend.n_y == 4 and pend.T == 1023
    assert PEND_F[1, 2] == 0.0005
    assert np.allclose(pend.A, np.eye(8) + 5e-4 * pendulum_closed_loop())
    with pytest.raises(UnknownDemo):
        get_demo("nope")
    assert set(DEMOS) == {"harmonic-oscillator", "pendulums", "example1"}


def test_model_file_round_trip(tmp_path):
    for m in (harmonic_oscillator(T=7),
              ModelSpec(A=np.stack([np.eye(2) * 0.9] * 3), C=np.ones((4, 1, 2)), Q=np.eye(2), R=np.eye(1),
                        P0=np.eye(2), T=3, name="tv")):
        path = tmp_path / "m.json"
        save_model(m, path)
        back = load_model(path)
        assert back.digest() == m.digest()
        assert back.time_invariant == m.time_invariant


def test_model_file_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema_version": 1,\n "kind": "model",\n "A": [[1]],,}')
    with pytest.raises(SchemaError, match="line 3"):
        load_model(path)
    path.write_text(json.dumps({"schema_version": 1, "kind": "model", "A": [[1.0]]}))
    with pytest.raises(SchemaError, match="missing"):
        load_model(path)


def test_gains_round_trip_and_validation(tmp_path):
    m = harmonic_oscillator(T=20)
    g = kalman_gains(m)
    s = solve_pkf(m, g, label="pkf_auc")
    path = tmp_path / "gains.json"
    save_gains({"pkf_auc": s}, m, path)
    back = load_gains(path, m, g)["pkf_auc"]
    assert np.array_equal(back.Pi, s.Pi) and np.array_equal(back.Sigma_w, s.Sigma_w)

    with pytest.raises(StaleGains):
        load_gains(path, m.with_alpha(np.arange(21.0)), g)

    data = json.loads(path.read_text())
    data["schedules"]["pkf_auc"]["Pi"][9] = (np.array(data["schedules"]["pkf_auc"]["Pi"][9]) * 3).tolist()
    path.write_text(json.dumps(data))
    with pytest.raises(InfeasibleSchedule, match="step 9") as err:
        load_gains(path, m, g)
    assert err.value.step == 9

    data["kind"] = "model"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError):
        load_gains(path, m, g)


def test_config_defaults_and_overrides(tmp_path):
    cfg = parse_config(cfg_text(alpha="total", horizon=31, n_trajectories=10, optimizer={"restarts": 2}), tmp_path)
    assert cfg.model.T == 31 and np.all(cfg.model.alpha == 1)
    assert cfg.n_trajectories == 10 and cfg.optimizer.restarts == 2 and cfg.window == 16
    assert cfg.output_dir == str(tmp_path / "out")


@pytest.mark.parametrize("fields, key", [
    ({"filters": []}, "filters"),
    ({"filters": ["kalman", "magic"]}, "filters"),
    ({"n_trajectories": 0}, "n_trajectories"),
    ({"colour": "red"}, "colour"),
    ({"filters": ["stationary"]}, "filters"),
    ({"optimizer": {"speed": 3}}, "speed"),
    ({"alpha": "median"}, "alpha"),
    ({"schema_version": 2}, "schema_version"),
])
def test_config_errors_name_line_and_field(fields, key):
    text = cfg_text(**fields)
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msg = str(err.value)
    assert f"field '{key}'" in msg
    line = next(i for i, l in enumerate(text.splitlines(), 1) if f'"{key}"' in l)
    assert f"line {line}" in msg


def test_config_invalid_json():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config('{\n "model": ,\n}')


def test_config_with_model_file(tmp_path):
    save_model(harmonic_oscillator(T=9), tmp_path / "m.json")
    (tmp_path / "c.json").write_text(cfg_text(model="m.json"))
    assert load_config(tmp_path / "c.json").model.T == 9
    (tmp_path / "c.json").write_text(cfg_text(model="m.json", horizon=4))
    with pytest.raises(ConfigError, match="horizon"):
        load_config(tmp_path / "c.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_config_stationary_accepts_stable_model():
    cfg = parse_config(cfg_text(model="pendulums", filters=["kalman", "stationary"]))
    assert cfg.filters == ("kalman", "stationary")
