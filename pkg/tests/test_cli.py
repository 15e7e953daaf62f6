import json
from pathlib import Path

import numpy as np
import pytest

from usc_lindblad.cli import main, read_fit_report_csv, read_sweep_csv
from usc_lindblad.config import ConfigError, builtin_preset, load_config, \
    preset_names
from usc_lindblad.dynamics import read_trajectory_csv

TINY = {
    "units": "meV",
    "target": {"kind": "lorentzian", "omega_c": 0.58, "g": 0.25, "kappa": 0.1},
    "emitter": {"omega_e": 0.58, "initial_state": "excited"},
    "fit": {"n_modes": 1, "neg_threshold": 1.0,
            "pos_window": [0.1, 1.2], "pos_points": 200, "neg_points": 0,
            "max_iterations": 150, "n_restarts": 1, "rng_seed": 3},
    "basis": {"max_total_excitations": 3},
    "dynamics": {"t_max": 8.0, "n_outputs": 40, "tol": 1e-8},
    "oracle": {"omega_min": -1.0, "omega_max": 2.0, "n_points": 40,
               "max_photons": 2, "check_convergence": False},
    "outputs": "out"
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


class TestConfig:
    def test_load_and_cross_checks(self, tiny_config):
        cfg = load_config(tiny_config)
        assert cfg.units == "meV"
        assert cfg.basis.n_modes == cfg.fit.n_modes
        assert cfg.t_grid().size == 41

    def test_bad_json_line_numbered(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n "units": "meV",\n oops\n}')
        with pytest.raises(ConfigError, match=r":3"):
            load_config(p)

    def test_unknown_units(self, tmp_path):
        doc = dict(TINY, units="joule")
        p = tmp_path / "u.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="units"):
            load_config(p)

    def test_missing_fit_section(self, tmp_path):
        doc = {k: v for k, v in TINY.items() if k != "fit"}
        p = tmp_path / "m.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="fit"):
            load_config(p)

    def test_seed_override(self, tiny_config):
        cfg = load_config(tiny_config, seed_override=99)
        assert cfg.fit.rng_seed == 99

    def test_presets_parse(self):
        names = preset_names()
        assert {"fig2", "fig4-narrow", "fig4-broad"} <= set(names)
        from usc_lindblad.config import parse_config
        cfg = parse_config(builtin_preset("fig2"))
        assert cfg.fit.n_modes == 10
        assert cfg.fit.neg_threshold == pytest.approx(1e-8)
        narrow = parse_config(builtin_preset("fig4-narrow"))
        assert narrow.units == "eV"
        assert narrow.emitter.omega_e == pytest.approx(2.4)
        assert narrow.fit.n_modes == 12
        assert narrow.fit.neg_grid.size == 0  # positive-only fit
        broad = parse_config(builtin_preset("fig4-broad"))
        assert broad.fit.n_modes == 28
        assert broad.fit.neg_grid.size == 400


class TestCommands:
    def test_fit_simulate_oracle_compare(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert main(["fit", "--config", str(tiny_config)]) == 0
        assert (out / "model.json").is_file()
        model_doc = json.loads((out / "model.json").read_text())
        assert model_doc["n_modes"] == 1
        assert model_doc["units"] == "meV"

        report = read_fit_report_csv(out / "fit_report.csv")
        assert len(report) == 200

        assert main(["simulate", "--config", str(tiny_config),
                     "--model", str(out / "model.json")]) == 0
        traj = read_trajectory_csv(out / "trajectory.csv")
        assert traj.times.size == 41
        assert traj.emitter_population[0] == pytest.approx(1.0)
        # femtosecond time column scales by hbar in meV fs
        rows = [line.split(",") for line in
                (out / "trajectory.csv").read_text().splitlines()[2:]]
        t_nat = np.array([float(r[0]) for r in rows])
        t_fs = np.array([float(r[1]) for r in rows])
        assert np.allclose(t_fs, t_nat * 658.2119569)

        assert main(["oracle", "--config", str(tiny_config)]) == 0
        orc = read_trajectory_csv(out / "oracle_trajectory.csv")
        assert orc.oracle is True
        assert orc.t_recurrence is not None

        assert main(["compare", "--a", str(out / "trajectory.csv"),
                     "--b", str(out / "oracle_trajectory.csv"),
                     "--out", str(out)]) == 0
        lines = (out / "error.csv").read_text().splitlines()
        assert lines[1] == "t,rel_error"
        from usc_lindblad.cli import read_error_csv
        times, errs, meta = read_error_csv(out / "error.csv")
        assert times.size == traj.times.size
        assert "avg_rel_error" in meta
        assert np.all(errs >= 0)

    def test_fit_deterministic_outputs(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["fit", "--config", str(tiny_config), "--out", str(out1)]) == 0
        assert main(["fit", "--config", str(tiny_config), "--out", str(out2)]) == 0
        for name in ("model.json", "resonances.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        # CSVs match apart from the timestamped metadata line
        a = (out1 / "fit_report.csv").read_text().splitlines()[1:]
        b = (out2 / "fit_report.csv").read_text().splitlines()[1:]
        assert a == b

    def test_exit_codes(self, tmp_path, tiny_config):
        missing = tmp_path / "nope.json"
        assert main(["fit", "--config", str(missing)]) == 1

        bad_csv = tmp_path / "bad.csv"
        bad_csv.write_text("omega,j\n1.0,0.5\n0.5,0.2\n")
        doc = dict(TINY, target={"kind": "tabulated", "path": str(bad_csv)})
        p = tmp_path / "tab.json"
        p.write_text(json.dumps(doc))
        assert main(["fit", "--config", str(p)]) == 1

        # basis overflow: resource cap exit
        doc = dict(TINY, basis={"max_total_excitations": 3, "max_states": 2})
        p2 = tmp_path / "cap.json"
        p2.write_text(json.dumps(doc))
        out = tmp_path / "out"
        out.mkdir(exist_ok=True)
        model = {"n_modes": 1, "omega_mat": [0.58], "kappa": [0.1],
                 "g": [0.25], "units": "meV"}
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(model))
        assert main(["simulate", "--config", str(p2), "--model", str(mp)]) == 3

    def test_units_mismatch(self, tiny_config, tmp_path):
        model = {"n_modes": 1, "omega_mat": [0.58], "kappa": [0.1],
                 "g": [0.25], "units": "eV"}
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(model))
        assert main(["simulate", "--config", str(tiny_config),
                     "--model", str(mp)]) == 1

    def test_sweep_with_reused_oracle(self, tmp_path):
        doc = dict(TINY)
        doc["fit"] = dict(TINY["fit"], n_modes=1, max_iterations=80)
        doc["sweep"] = {"n_modes_list": [1], "threshold_list": [1.0, 0.5]}
        doc["dynamics"] = {"t_max": 6.0, "n_outputs": 20, "tol": 1e-7}
        p = tmp_path / "sweep.json"
        p.write_text(json.dumps(doc))
        out = tmp_path / "out"
        assert main(["oracle", "--config", str(p)]) == 0
        assert main(["sweep", "--config", str(p),
                     "--oracle-traj", str(out / "oracle_trajectory.csv")]) == 0
        cells = read_sweep_csv(out / "sweep.csv")
        assert len(cells) == 2
        assert all(np.isfinite(c.avg_rel_error) for c in cells)

    def test_preset_command(self, tmp_path):
        assert main(["preset", "fig2", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "fig2.json").read_text())
        assert doc["fit"]["n_modes"] == 10
        assert main(["preset", "nonexistent", "--out", str(tmp_path)]) == 1
