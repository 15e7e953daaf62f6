import numpy as np
import pytest

from usc_lindblad.dynamics import propagate
from usc_lindblad.fock import (
    BasisSpec, EmitterSpec, build_basis, build_hamiltonian,
    build_jump_operators, initial_density_matrix,
)
from usc_lindblad.oracle import (
    DiscretizationSpec, discretize, exact_propagate, recurrence_time,
)
from usc_lindblad.spectral import LorentzianParams, ModeModel, eval_lorentzian

EXCITED = EmitterSpec(0.58, "excited")


class TestDiscretize:
    def test_riemann_sum_of_weights(self):
        # sum g_k^2 is the midpoint Riemann sum of J and converges to its
        # integral as the grid refines
        from scipy.integrate import quad

        p = LorentzianParams(0.58, 0.25, 0.1)
        target = lambda w: eval_lorentzian(p, w)
        d0 = DiscretizationSpec(0.58 - 4.0, 0.58 + 4.0, 100)
        ref, _ = quad(target, d0.omega_min, d0.omega_max, limit=200)
        errors = []
        for n in (100, 400, 1600):
            m = discretize(target, DiscretizationSpec(d0.omega_min,
                                                      d0.omega_max, n))
            errors.append(abs(float(np.sum(m.g**2)) - ref))
        assert errors[1] < errors[0] and errors[2] < errors[1]
        assert errors[2] < 1e-4 * ref

    def test_window_captures_lorentzian_weight(self):
        # [w_c - 40k, w_c + 40k] holds (2/pi) arctan(80) >= 0.99 of g^2
        p = LorentzianParams(0.58, 0.25, 0.1)
        d = DiscretizationSpec(0.58 - 4.0, 0.58 + 4.0, 2000)
        m = discretize(lambda w: eval_lorentzian(p, w), d)
        captured = float(np.sum(m.g**2))
        assert captured >= 0.99 * p.g**2
        assert captured == pytest.approx((2 / np.pi) * np.arctan(80.0) * p.g**2,
                                         rel=1e-3)

    def test_zero_target(self):
        d = DiscretizationSpec(0.0, 2.0, 50)
        m = discretize(lambda w: np.zeros_like(np.asarray(w, float)), d)
        assert np.all(m.g == 0.0)
        assert m.lossless

    def test_negative_density_rejected(self):
        d = DiscretizationSpec(0.0, 2.0, 50)
        with pytest.raises(ValueError, match="negative"):
            discretize(lambda w: -np.ones_like(np.asarray(w, float)), d)

    def test_recurrence_time(self):
        d = DiscretizationSpec(0.0, 2.0, 100)
        m = discretize(lambda w: np.ones_like(np.asarray(w, float)), d)
        assert recurrence_time(m) == pytest.approx(2 * np.pi / 0.02)


class TestExactPropagate:
    def test_no_coupling_keeps_emitter(self):
        d = DiscretizationSpec(0.0, 2.0, 30)
        m = discretize(lambda w: np.zeros_like(np.asarray(w, float)), d)
        traj = exact_propagate(m, EXCITED, BasisSpec(30, 3, max_photons=2),
                               np.linspace(0, 5, 11))
        assert np.abs(traj.emitter_population - 1.0).max() < 1e-6

    def test_norm_conserved(self):
        p = LorentzianParams(0.58, 0.25, 0.1)
        d = DiscretizationSpec(-1.0, 2.0, 60)
        m = discretize(lambda w: eval_lorentzian(p, w), d)
        traj = exact_propagate(m, EXCITED, BasisSpec(60, 3, max_photons=2),
                               np.linspace(0, 20, 41), tol=1e-8)
        assert traj.trace_defect.max() < 1e-7
        assert np.all(traj.purity == 1.0)
        assert np.all(traj.bath_photons == 0.0)

    def test_recurrence_flag(self):
        d = DiscretizationSpec(0.0, 2.0, 10)
        m = discretize(lambda w: 0.01 * np.ones_like(np.asarray(w, float)), d)
        t_rec = recurrence_time(m)
        traj = exact_propagate(m, EXCITED, BasisSpec(10, 2),
                               np.linspace(0, 1.2 * t_rec, 10))
        assert "t_max_exceeds_recurrence_time" in traj.flags

    def test_requires_lossless_model(self):
        m = ModeModel(np.array([[0.5]]), np.array([0.1]), np.array([0.1]))
        with pytest.raises(ValueError):
            exact_propagate(m, EXCITED, BasisSpec(1, 2), np.linspace(0, 1, 3))

    def test_weak_coupling_matches_lindblad(self):
        # open-system equivalence in a cheap regime: weak coupling, where the
        # low excitation shells converge and a modest grid resolves the line
        g = 0.025
        p = LorentzianParams(0.58, g, 0.1)
        target = lambda w: eval_lorentzian(p, w)
        model = ModeModel(np.array([[0.58]]), np.array([0.1]), np.array([g]))
        t = np.linspace(0, 80, 81)
        basis = build_basis(BasisSpec(1, 4))
        h = build_hamiltonian(model, EXCITED, basis)
        jumps = build_jump_operators(model, basis)
        lindblad = propagate(initial_density_matrix(basis, EXCITED), h, jumps,
                             basis, t)
        d = DiscretizationSpec(0.58 - 4.0, 0.58 + 4.0, 400)
        mo = discretize(target, d)
        oracle = exact_propagate(mo, EXCITED,
                                 BasisSpec(400, 3, max_photons=2,
                                           max_states=300_000), t, tol=1e-7)
        assert t[-1] < 0.8 * oracle.t_recurrence
        diff = np.abs(oracle.emitter_population
                      - lindblad.emitter_population).max()
        assert diff < 5e-3

    def test_doubling_convergence_weak_coupling(self):
        g = 0.025
        p = LorentzianParams(0.58, g, 0.1)
        target = lambda w: eval_lorentzian(p, w)
        t = np.linspace(0, 40, 21)
        curves = []
        for n in (200, 400):
            d = DiscretizationSpec(0.58 - 4.0, 0.58 + 4.0, n)
            mo = discretize(target, d)
            traj = exact_propagate(mo, EXCITED,
                                   BasisSpec(n, 3, max_photons=2,
                                             max_states=300_000), t, tol=1e-7)
            curves.append(traj.emitter_population)
        assert np.abs(curves[1] - curves[0]).max() < 1e-3
