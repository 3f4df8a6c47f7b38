import hashlib
import json
import os

import numpy as np
import pytest

from stommelbox import cli, obs
from stommelbox.core import YEAR_SECONDS


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _run(args):
    return cli.main([str(a) for a in args])


def _small_config(tmp_path, **extra):
    cfg = {
        "experiment": {"M": 6, "seed": 5, "da_end_year": 2007.0, "end_year": 2010.0},
        "simulate": {"end_year": 2024.0},
    }
    for key, value in extra.items():
        cfg.setdefault(key, {}).update(value)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


@pytest.fixture
def profiles_csv(tmp_path):
    frame = obs.synth_profiles(obs.SynthProfileSpec())
    path = tmp_path / "profiles.csv"
    obs.write_profiles(frame, path)
    return path


class TestDeterminism:
    def _compare_dirs(self, a, b):
        names = sorted(os.listdir(a))
        assert names == sorted(os.listdir(b))
        for name in names:
            if name == cli.MANIFEST_NAME:
                ma = json.load(open(os.path.join(a, name)))
                mb = json.load(open(os.path.join(b, name)))
                ma.pop("wall_clock_s")
                mb.pop("wall_clock_s")
                assert ma == mb
            else:
                assert _digest(os.path.join(a, name)) == _digest(os.path.join(b, name)), name

    def test_twin_is_byte_identical(self, tmp_path):
        cfg = _small_config(tmp_path)
        for out in ("a", "b"):
            assert _run(["twin", "--config", cfg, "--out", tmp_path / out]) == 0
        self._compare_dirs(tmp_path / "a", tmp_path / "b")

    def test_simulate_is_byte_identical(self, tmp_path):
        cfg = _small_config(tmp_path)
        for out in ("a", "b"):
            assert _run(["simulate", "--config", cfg, "--out", tmp_path / out]) == 0
        self._compare_dirs(tmp_path / "a", tmp_path / "b")

    def test_sweep_is_byte_identical(self, tmp_path):
        cfg = _small_config(tmp_path, sweep={"melt_periods_yr": [500.0], "warming_eq": [0.0, 0.1]})
        for out in ("a", "b"):
            assert _run(["sweep", "--config", cfg, "--out", tmp_path / out]) == 0
        self._compare_dirs(tmp_path / "a", tmp_path / "b")

    def test_seed_flag_changes_output(self, tmp_path):
        cfg = _small_config(tmp_path)
        assert _run(["twin", "--config", cfg, "--out", tmp_path / "a"]) == 0
        assert _run(["twin", "--config", cfg, "--seed", 99, "--out", tmp_path / "b"]) == 0
        assert _digest(tmp_path / "a" / "members.csv") != _digest(tmp_path / "b" / "members.csv")


class TestConfigHandling:
    def test_malformed_json_fails_without_outputs(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "out"
        assert _run(["twin", "--config", bad, "--out", out]) != 0
        assert not out.exists()

    def test_unknown_keys_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": {"bogus": 1}}))
        assert _run(["twin", "--config", cfg, "--out", tmp_path / "out"]) != 0

    def test_defaults_round_trip(self):
        cfg = cli.default_config()
        exp = cli.build_experiment(cfg)
        assert exp.M == 100
        assert exp.da_end_year == 2022.0
        ctx = cli.build_context(cfg)
        assert ctx.geometry.dz == 3148.0
        assert ctx.constants.alphaT * ctx.constants.rho0 == pytest.approx(0.15)


class TestBifurcationCommand:
    def test_reference_annotations(self, tmp_path):
        assert _run(["bifurcation", "--eta1", 3, "--eta3", 0.1, "--out", tmp_path]) == 0
        header, rows = _read_csv(tmp_path / "bifurcation.csv")
        nsf = {float(r[header.index("nsf_eta2")]) for r in rows}
        assert nsf == {3.0 * 0.1}
        sn = {float(r[header.index("sn_eta2")]) for r in rows}
        assert len(sn) == 1
        assert abs(sn.pop() - 0.901) < 1e-3

    def test_invalid_eta3_fails(self, tmp_path):
        assert _run(["bifurcation", "--eta1", 3, "--eta3", -0.1, "--out", tmp_path]) != 0


class TestSimulateCommand:
    def test_constant_forcing_reaches_equilibrium(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "forcing": {"Te_a": [16.7, 0, 0], "Tp_a": [1.5, 0, 0],
                        "Se_a": [35.77, 0, 0], "Sp_a": [33.05, 0, 0]},
            "simulate": {"end_year": 2504.0},
        }))
        assert _run(["simulate", "--config", cfg, "--out", tmp_path / "out"]) == 0
        message = capsys.readouterr().out
        assert "terminal tendency max-abs" in message
        value = float(message.split(":")[1].split("(")[0])
        assert value < 1e-12

    def test_seasonal_run_has_annual_spectral_peak(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"simulate": {"end_year": 2104.0}}))
        assert _run(["simulate", "--config", cfg, "--out", tmp_path / "out"]) == 0
        header, rows = _read_csv(tmp_path / "out" / "trajectory.csv")
        psi = np.array([float(r[header.index("psi_sv")]) for r in rows])
        t = np.array([float(r[header.index("time_s")]) for r in rows])
        # analyse the last half of the run, after the equilibration transient
        half = len(psi) // 2
        psi, t = psi[half:], t[half:]
        dt = t[1] - t[0]
        spectrum = np.abs(np.fft.rfft(psi - psi.mean()))
        freqs = np.fft.rfftfreq(len(psi), d=dt)
        peak = freqs[1 + np.argmax(spectrum[1:])]
        assert peak == pytest.approx(1.0 / YEAR_SECONDS, rel=0.05)


class TestObsProcessCommand:
    def test_outputs_match_pipeline_values(self, tmp_path, profiles_csv):
        cfg = tmp_path / "ocfg.json"
        cfg.write_text(json.dumps({"obs_process": {"min_total_depth_m": 100.0}}))
        out = tmp_path / "out"
        assert _run(["obs-process", "--profiles", profiles_csv, "--config", cfg, "--out", out]) == 0
        series = obs.read_obs_series(out / "obs_series.csv")
        # interior values are planted constants in the synthetic fixture
        assert np.allclose(series.d[:, 0], 1.0, atol=1e-12)
        assert np.allclose(series.d[:, 1], 5.0, atol=1e-12)
        forcing = json.load(open(out / "forcing.json"))
        assert forcing["Tp_a"]["c0"] == pytest.approx(1.5, abs=1e-9)
        assert forcing["Se_a"]["c_cos"] == pytest.approx(0.04, abs=1e-9)
        geometry = json.load(open(out / "geometry.json"))
        assert geometry["dz_m"] == pytest.approx(200.0, rel=1e-12)

    def test_inputs_not_mutated(self, tmp_path, profiles_csv):
        cfg = tmp_path / "ocfg.json"
        cfg.write_text(json.dumps({"obs_process": {"min_total_depth_m": 100.0}}))
        before = _digest(profiles_csv)
        assert _run(["obs-process", "--profiles", profiles_csv, "--config", cfg,
                     "--out", tmp_path / "out"]) == 0
        assert _digest(profiles_csv) == before

    def test_determinism(self, tmp_path, profiles_csv):
        cfg = tmp_path / "ocfg.json"
        cfg.write_text(json.dumps({"obs_process": {"min_total_depth_m": 100.0}}))
        for out in ("a", "b"):
            assert _run(["obs-process", "--profiles", profiles_csv, "--config", cfg,
                         "--out", tmp_path / out]) == 0
        assert _digest(tmp_path / "a" / "obs_series.csv") == _digest(tmp_path / "b" / "obs_series.csv")
        assert _digest(tmp_path / "a" / "forcing.json") == _digest(tmp_path / "b" / "forcing.json")


class TestAssimilateCommand:
    def test_full_chain(self, tmp_path, profiles_csv):
        ocfg = tmp_path / "ocfg.json"
        ocfg.write_text(json.dumps({"obs_process": {"min_total_depth_m": 100.0}}))
        obs_out = tmp_path / "obs"
        assert _run(["obs-process", "--profiles", profiles_csv, "--config", ocfg,
                     "--out", obs_out]) == 0
        cfg = _small_config(tmp_path)
        out = tmp_path / "assim"
        assert _run(["assimilate", "--config", cfg, "--obs", obs_out / "obs_series.csv",
                     "--forcing", obs_out / "forcing.json", "--out", out]) == 0
        assert (out / "innovations.csv").exists()
        manifest = json.load(open(out / cli.MANIFEST_NAME))
        assert set(manifest["inputs"]) == {"config.json", "obs_series.csv", "forcing.json"}
        assert "members.csv" in manifest["outputs"]

    def test_determinism(self, tmp_path, profiles_csv):
        ocfg = tmp_path / "ocfg.json"
        ocfg.write_text(json.dumps({"obs_process": {"min_total_depth_m": 100.0}}))
        obs_out = tmp_path / "obs"
        _run(["obs-process", "--profiles", profiles_csv, "--config", ocfg, "--out", obs_out])
        cfg = _small_config(tmp_path)
        for out in ("a", "b"):
            assert _run(["assimilate", "--config", cfg, "--obs", obs_out / "obs_series.csv",
                         "--out", tmp_path / out]) == 0
        assert _digest(tmp_path / "a" / "members.csv") == _digest(tmp_path / "b" / "members.csv")


class TestCalibrateCommand:
    def test_writes_positive_params(self, tmp_path):
        out = tmp_path / "cal"
        assert _run(["calibrate", "--out", out]) == 0
        params = json.load(open(out / "params.json"))
        assert params["kT"] > 0 and params["kS"] > 0 and params["gamma"] > 0
        assert params["kT"] == pytest.approx(3.3e-6, rel=0.05)

    def test_determinism(self, tmp_path):
        for out in ("a", "b"):
            assert _run(["calibrate", "--out", tmp_path / out]) == 0
        assert _digest(tmp_path / "a" / "params.json") == _digest(tmp_path / "b" / "params.json")


class TestManifest:
    def test_contents(self, tmp_path):
        cfg = _small_config(tmp_path)
        out = tmp_path / "out"
        assert _run(["twin", "--config", cfg, "--out", out]) == 0
        manifest = json.load(open(out / cli.MANIFEST_NAME))
        assert manifest["command"] == "twin"
        assert manifest["seed"] == 5
        assert manifest["config"]["experiment"]["M"] == 6
        assert manifest["inputs"]["config.json"] == _digest(cfg)
        assert manifest["wall_clock_s"] >= 0.0
        for name in manifest["outputs"]:
            assert (out / name).exists()
