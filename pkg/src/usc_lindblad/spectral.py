"""Spectral densities of the electromagnetic environment.

Three target families (analytic Lorentzian, positive-frequency single-mode
Ohmic form, tabulated data) plus the effective spectral density generated by
a network of N lossy interacting bosonic modes,

    J(w) = (1/pi) g . Im[(M - w)^-1] . g,   M_ij = w_ij - (i/2) delta_ij k_i.

All evaluators accept scalars or arrays and are pure; the parameter types are
immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

__all__ = [
    "LorentzianParams",
    "SingleModeOhmicParams",
    "TabulatedSD",
    "ModeModel",
    "eval_lorentzian",
    "eval_single_mode_ohmic",
    "eval_tabulated",
    "eval_model_sd",
    "model_resonances",
    "integrate_model_sd",
    "read_tabulated_csv",
]


@dataclass(frozen=True)
class LorentzianParams:
    """Single lossy mode: Lorentzian line at omega_c with FWHM kappa and weight g^2."""

    omega_c: float
    g: float
    kappa: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")


@dataclass(frozen=True)
class SingleModeOhmicParams:
    """Lossy mode coupled to an Ohmic background bath; support on w > 0 only."""

    omega_c: float
    g: float
    kappa: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if self.omega_c <= 0:
            raise ValueError("omega_c must be > 0")


class TabulatedSD:
    """Sampled spectral density, linearly interpolated inside the sample range.

    Evaluates to 0 outside the range and for w <= 0. Frequencies must be
    strictly increasing and values non-negative.
    """

    def __init__(self, omegas, values):
        omegas = np.asarray(omegas, dtype=float)
        values = np.asarray(values, dtype=float)
        if omegas.ndim != 1 or omegas.size == 0:
            raise ValueError("empty or non-1d frequency table")
        if omegas.shape != values.shape:
            raise ValueError("omega and value columns differ in length")
        if omegas.size > 1 and not np.all(np.diff(omegas) > 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("spectral density values must be >= 0")
        self.omegas = omegas
        self.values = values
        self.omegas.setflags(write=False)
        self.values.setflags(write=False)

    def __call__(self, omega):
        return eval_tabulated(self, omega)


@dataclass(frozen=True, eq=False)
class ModeModel:
    """Network of N lossy interacting modes coupled to the emitter.

    omega_mat is the real symmetric N x N matrix of mode energies (diagonal)
    and couplings (off-diagonal), kappa the per-mode decay rates and g the
    emitter couplings. Decay rates must be strictly positive, except for the
    lossless (all kappa = 0) models produced by continuum discretization.
    """

    omega_mat: np.ndarray
    kappa: np.ndarray
    g: np.ndarray

    _SYM_TOL = 1e-12

    def __post_init__(self):
        omega = np.atleast_2d(np.asarray(self.omega_mat, dtype=float))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = omega.shape[0]
        if omega.shape != (n, n):
            raise ValueError("omega_mat must be square")
        if kappa.shape != (n,) or g.shape != (n,):
            raise ValueError("kappa and g must have length n_modes")
        scale = max(np.abs(omega).max(), 1.0)
        if np.abs(omega - omega.T).max() > self._SYM_TOL * scale:
            raise ValueError("omega_mat must be symmetric")
        omega = 0.5 * (omega + omega.T)
        if np.any(kappa < 0):
            raise ValueError("kappa must be >= 0")
        if np.any(kappa == 0) and np.any(kappa > 0):
            raise ValueError("kappa must be all positive (open) or all zero (lossless)")
        for arr, name in ((omega, "omega_mat"), (kappa, "kappa"), (g, "g")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_modes(self) -> int:
        return self.omega_mat.shape[0]

    @property
    def lossless(self) -> bool:
        return bool(np.all(self.kappa == 0))

    def damped_matrix(self) -> np.ndarray:
        """Complex symmetric mode matrix omega_mat - (i/2) diag(kappa)."""
        return self.omega_mat - 0.5j * np.diag(self.kappa)

    def to_dict(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "omega_mat": [float(x) for x in self.omega_mat.ravel()],
            "kappa": [float(x) for x in self.kappa],
            "g": [float(x) for x in self.g],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModeModel":
        n = int(d["n_modes"])
        omega = np.array(d["omega_mat"], dtype=float).reshape(n, n)
        return cls(omega, np.array(d["kappa"], dtype=float), np.array(d["g"], dtype=float))


def _wrap_scalar(result, omega_in):
    if np.isscalar(omega_in) or (hasattr(omega_in, "ndim") and omega_in.ndim == 0):
        return float(result)
    return result


def eval_lorentzian(p: LorentzianParams, omega):
    """J(w) = (g^2/pi) (k/2) / ((w_c - w)^2 + k^2/4), defined on the whole real axis."""
    w = np.asarray(omega, dtype=float)
    out = (p.g**2 / np.pi) * (p.kappa / 2.0) / ((p.omega_c - w) ** 2 + p.kappa**2 / 4.0)
    return _wrap_scalar(out, omega)


def eval_single_mode_ohmic(p: SingleModeOhmicParams, omega):
    """J(w) = theta(w) (2 g^2/pi) k w_c w / ((w_c^2 - w^2)^2 + k^2 w^2)."""
    w = np.asarray(omega, dtype=float)
    num = (2.0 * p.g**2 / np.pi) * p.kappa * p.omega_c * w
    den = (p.omega_c**2 - w**2) ** 2 + p.kappa**2 * w**2
    out = np.where(w > 0, num / den, 0.0)
    return _wrap_scalar(out, omega)


def eval_tabulated(t: TabulatedSD, omega):
    w = np.asarray(omega, dtype=float)
    out = np.interp(w, t.omegas, t.values, left=0.0, right=0.0)
    out = np.where(w > 0, out, 0.0)
    return _wrap_scalar(out, omega)


def eval_model_sd(m: ModeModel, omega):
    """Effective spectral density of the mode network, (1/pi) g.Im[(M - w)^-1].g.

    Finite for every real w because all decay rates are positive; positive
    semidefinite because Im[(M - w)^-1] is a PSD matrix for kappa > 0.
    """
    if m.lossless:
        raise ValueError("model spectral density requires kappa > 0")
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    mat = m.damped_matrix()
    a = mat[None, :, :] - w[:, None, None] * np.eye(m.n_modes)[None, :, :]
    v = np.linalg.solve(a, np.broadcast_to(m.g, (w.size, m.n_modes))[:, :, None])[:, :, 0]
    out = (v @ m.g).imag / np.pi
    return _wrap_scalar(out if out.size > 1 else out[0], omega)


def model_resonances(m: ModeModel) -> np.ndarray:
    """Complex resonances: eigenvalues of the damped mode matrix (Im <= 0)."""
    return np.linalg.eigvals(m.damped_matrix())


def integrate_model_sd(m: ModeModel, rel_tol: float = 1e-10) -> float:
    """Integral of the model spectral density over the whole real axis.

    Adaptive quadrature on [-W, W] with W = 50 (max |Re resonance| + max kappa),
    plus the analytic w^-2 tail correction sum_i g_i^2 k_i / (pi W).
    Equals sum_i g_i^2 exactly for the untruncated integral.
    """
    res = model_resonances(m)
    big = 50.0 * (np.abs(res.real).max() + m.kappa.max())
    pts = sorted(res.real)
    val, _ = quad(lambda w: eval_model_sd(m, w), -big, big,
                  points=pts, limit=400, epsabs=0.0, epsrel=rel_tol)
    tail = float(np.sum(m.g**2 * m.kappa)) / (np.pi * big)
    return val + tail


def read_tabulated_csv(path) -> TabulatedSD:
    """Read a tabulated spectral density from CSV with header line 'omega,j'.

    Raises ValueError with a line-numbered diagnostic on malformed rows,
    non-monotonic frequencies or negative values.
    """
    omegas, values = [], []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].strip().replace(" ", "")
    if header.lower() != "omega,j":
        raise ValueError(f"{path}:1: expected header 'omega,j', got {lines[0].strip()!r}")
    for ln, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{ln}: expected two comma-separated values")
        try:
            w, j = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{ln}: could not parse numbers from {s!r}") from None
        if j < 0:
            raise ValueError(f"{path}:{ln}: negative spectral density {j}")
        if omegas and w <= omegas[-1]:
            raise ValueError(f"{path}:{ln}: frequencies not strictly increasing")
        omegas.append(w)
        values.append(j)
    if not omegas:
        raise ValueError(f"{path}: no data rows")
    return TabulatedSD(np.array(omegas), np.array(values))
