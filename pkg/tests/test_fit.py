import numpy as np
import pytest

from usc_lindblad.fit import (
    FitConfig, _decode, _encode, _sd_and_jac, default_neg_grid,
    default_pos_grid, fit_model, fit_report, initialize_model,
)
from usc_lindblad.spectral import (
    LorentzianParams, ModeModel, eval_lorentzian, eval_model_sd,
)

P_LOR = LorentzianParams(omega_c=0.58, g=0.25, kappa=0.1)
LOR_TARGET = lambda w: eval_lorentzian(P_LOR, w)


def lorentzian_cfg(**kw):
    args = dict(n_modes=1, neg_threshold=1.0,
                pos_grid=default_pos_grid(2.9, 400), neg_grid=np.zeros(0),
                max_iterations=300, n_restarts=1, rng_seed=3)
    args.update(kw)
    return FitConfig(**args)


class TestJacobian:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(3)
        n = 4
        off = 0.1 * rng.standard_normal((n, n))
        off = np.triu(off, 1)
        omega = np.diag(rng.uniform(0.2, 2.0, n)) + off + off.T
        theta = _encode(ModeModel(omega, rng.uniform(0.05, 0.5, n),
                                  rng.uniform(0.0, 0.3, n)))
        w = np.array([-1.3, -0.2, 0.4, 0.9, 2.7])
        _, jac = _sd_and_jac(*_decode(theta, n), w)
        h = 1e-6
        num = np.zeros_like(jac)
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            jp, _ = _sd_and_jac(*_decode(tp, n), w)
            jm, _ = _sd_and_jac(*_decode(tm, n), w)
            num[:, k] = (jp - jm) / (2 * h)
        scale = max(np.abs(num).max(), 1e-300)
        assert np.abs(jac - num).max() / scale < 1e-7


class TestInitialize:
    def test_peak_picking_single_lorentzian(self):
        cfg = lorentzian_cfg()
        m = initialize_model(LOR_TARGET, cfg, 0)
        step = cfg.pos_grid[1] - cfg.pos_grid[0]
        assert abs(m.omega_mat[0, 0] - 0.58) <= step

    def test_flat_zero_target(self):
        cfg = lorentzian_cfg(n_modes=3)
        m = initialize_model(lambda w: np.zeros_like(np.asarray(w, float)),
                             cfg, 0)
        assert np.all(m.g == 0.0)

    def test_deterministic(self):
        cfg = lorentzian_cfg(n_modes=4)
        a = initialize_model(LOR_TARGET, cfg, 2)
        b = initialize_model(LOR_TARGET, cfg, 2)
        assert np.array_equal(a.omega_mat, b.omega_mat)
        assert np.array_equal(a.kappa, b.kappa)
        assert np.array_equal(a.g, b.g)

    def test_restarts_differ(self):
        cfg = lorentzian_cfg(n_modes=4)
        a = initialize_model(LOR_TARGET, cfg, 0)
        b = initialize_model(LOR_TARGET, cfg, 1)
        assert not np.array_equal(a.omega_mat, b.omega_mat)


class TestFitModel:
    def test_in_class_recovery(self):
        cfg = lorentzian_cfg()
        res = fit_model(LOR_TARGET, cfg)
        assert res.converged
        assert res.pos_residual < 1e-8
        assert res.model.omega_mat[0, 0] == pytest.approx(0.58, rel=1e-6)
        assert res.model.g[0] == pytest.approx(0.25, rel=1e-6)
        assert res.model.kappa[0] == pytest.approx(0.1, rel=1e-6)

    def test_zero_target_gives_zero_model(self):
        cfg = lorentzian_cfg(n_modes=2, max_iterations=100)
        res = fit_model(lambda w: np.zeros_like(np.asarray(w, float)), cfg)
        w = cfg.pos_grid
        assert np.abs(eval_model_sd(res.model, w)).max() < 1e-12

    def test_objective_monotone_within_stages(self):
        cfg = lorentzian_cfg(n_modes=2,
                             neg_grid=default_neg_grid(0.58, -2.9, 50),
                             neg_threshold=1e-4, max_iterations=60)
        res = fit_model(LOR_TARGET, cfg)
        hist = np.array(res.objective_history)
        bounds = list(res.stage_starts) + [len(hist)]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            stage = hist[lo:hi]
            assert np.all(np.diff(stage) <= 1e-12 * np.abs(stage[:-1]))

    def test_idempotent_on_in_class_target(self):
        # starting from the true parameters must leave the residual at zero
        from usc_lindblad.fit import _canonicalize, _lm_minimize, _residual_builder

        rng = np.random.default_rng(9)
        off = 0.05 * rng.standard_normal((3, 3))
        off = np.triu(off, 1)
        true = ModeModel(np.diag([0.4, 0.8, 1.3]) + off + off.T,
                         rng.uniform(0.1, 0.3, 3), np.array([0.2, 0.15, 0.1]))
        target = lambda w: eval_model_sd(true, w)

        cfg = lorentzian_cfg(n_modes=3, max_iterations=150)
        fun_jac_for, metrics = _residual_builder(target, cfg)
        theta, _, _ = _lm_minimize(fun_jac_for(0.0), _encode(true), 50)
        pos_res, _, _ = metrics(_canonicalize(*_decode(theta, 3)))
        assert pos_res < 1e-10

    def test_determinism(self):
        cfg = lorentzian_cfg(n_modes=2, max_iterations=80,
                             neg_grid=default_neg_grid(0.58, -2.9, 40),
                             neg_threshold=1e-3)
        a = fit_model(LOR_TARGET, cfg)
        b = fit_model(LOR_TARGET, cfg)
        assert np.array_equal(a.model.omega_mat, b.model.omega_mat)
        assert np.array_equal(a.model.kappa, b.model.kappa)
        assert np.array_equal(a.model.g, b.model.g)
        assert a.objective_history == b.objective_history

    def test_gauge_fixed_nonnegative_couplings(self):
        cfg = lorentzian_cfg(n_modes=3, max_iterations=120)
        res = fit_model(LOR_TARGET, cfg)
        assert np.all(res.model.g >= 0)

    def test_constraint_verified_on_refined_grid(self):
        cfg = lorentzian_cfg(n_modes=3, max_iterations=250, n_restarts=2,
                             neg_grid=default_neg_grid(0.58, -2.9, 60),
                             neg_threshold=1e-3)
        res = fit_model(LOR_TARGET, cfg)
        from usc_lindblad.fit import _verification_grid
        grid = _verification_grid(cfg.neg_grid)
        j = eval_model_sd(res.model, grid)
        # post-hoc feasibility on the doubled grid, allowing the spec margin
        assert float(np.max(j)) <= 2 * cfg.neg_threshold

    def test_unevaluable_target_rejected(self):
        cfg = lorentzian_cfg()
        with pytest.raises(ValueError, match="not evaluable"):
            fit_model(lambda w: (_ for _ in ()).throw(RuntimeError("boom")),
                      cfg)


class TestFitReport:
    def test_report_shapes_and_residual(self):
        cfg = lorentzian_cfg(neg_grid=default_neg_grid(0.58, -2.9, 30),
                             neg_threshold=1e-2)
        res = fit_model(LOR_TARGET, cfg)
        rep = fit_report(res, LOR_TARGET, cfg)
        assert rep.pos_omega.size == cfg.pos_grid.size
        assert rep.neg_omega.size == cfg.neg_grid.size
        assert np.abs(rep.pos_residuals).max() < 1e-6
        assert rep.resonances.shape == (1,)
        rows = rep.rows()
        assert len(rows) == cfg.pos_grid.size + cfg.neg_grid.size

    def test_neg_column_below_threshold_when_feasible(self):
        cfg = lorentzian_cfg(n_modes=3, max_iterations=250, n_restarts=2,
                             neg_grid=default_neg_grid(0.58, -2.9, 60),
                             neg_threshold=1e-3)
        res = fit_model(LOR_TARGET, cfg)
        rep = fit_report(res, LOR_TARGET, cfg)
        if res.neg_violation == 0.0:
            assert np.all(rep.neg_model <= cfg.neg_threshold + 1e-15)


class TestConfigValidation:
    def test_grid_sign_checks(self):
        with pytest.raises(ValueError):
            FitConfig(1, 1.0, np.array([-0.1, 0.5]), np.zeros(0))
        with pytest.raises(ValueError):
            FitConfig(1, 1.0, np.array([0.1, 0.5]), np.array([0.2]))
        with pytest.raises(ValueError):
            FitConfig(1, -1.0, np.array([0.1]), np.zeros(0))
