"""Truncated basis and sparse operators for emitter x N bosonic modes.

States |s; n_1..n_N> with s in {g, e} are kept when the total excitation
number sum(n_i) + [s = e] stays at or below a global cap. Basis order is
fixed and documented: ascending total excitation, ground states before
excited states within a shell, photon configurations in the lexicographic
order of their sorted (mode, count) patterns. Annihilation operators are
therefore strictly lower block triangular in the excitation grading.

An optional additional cap on the photon number sum(n_i) alone exists for
continuum-discretization runs with hundreds of modes, where the plain rule
would enumerate the (combinatorially huge) highest photon shell that is
beyond reach of the dynamics at leading order.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy import sparse

from .spectral import ModeModel

__all__ = [
    "EmitterSpec",
    "BasisSpec",
    "Basis",
    "build_basis",
    "build_annihilation_ops",
    "build_hamiltonian",
    "build_jump_operators",
    "initial_state_vector",
    "initial_density_matrix",
    "min_excitation_eigenstate",
]

GROUND, EXCITED = 0, 1


@dataclass(frozen=True)
class EmitterSpec:
    """Two-level emitter with transition frequency omega_e."""

    omega_e: float
    initial_state: str = "excited"

    def __post_init__(self):
        if self.omega_e <= 0:
            raise ValueError("omega_e must be > 0")
        if self.initial_state not in ("excited", "ground"):
            raise ValueError("initial_state must be 'excited' or 'ground'")


@dataclass(frozen=True)
class BasisSpec:
    n_modes: int
    max_total_excitations: int
    max_photons: int | None = None
    max_states: int = 200_000

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.max_total_excitations < 1:
            raise ValueError("max_total_excitations must be >= 1")
        if self.max_photons is not None and self.max_photons < 0:
            raise ValueError("max_photons must be >= 0")


class BasisOverflowError(RuntimeError):
    """Raised when the state count exceeds the configured cap."""


class Basis:
    """Indexed truncated basis with precomputed observable machinery."""

    def __init__(self, spec: BasisSpec, states: list):
        self.spec = spec
        self.states = states
        self.dim = len(states)
        self.index = {st: i for i, st in enumerate(states)}
        self.emitter_excited = np.fromiter(
            (s for s, _ in states), dtype=bool, count=self.dim)
        self.total_excitation = np.fromiter(
            (s + sum(c for _, c in occ) for s, occ in states), dtype=np.int64,
            count=self.dim)
        rows, cols, vals = [], [], []
        for i, (_, occ) in enumerate(states):
            for k, c in occ:
                rows.append(i)
                cols.append(k)
                vals.append(float(c))
        self.occupations = sparse.csr_array(
            (vals, (rows, cols)), shape=(self.dim, spec.n_modes))

    def index_of(self, excited: bool, occ_pattern) -> int:
        return self.index[(int(excited), tuple(occ_pattern))]

    def state_label(self, i: int) -> str:
        s, occ = self.states[i]
        body = " ".join(f"{c}@{k}" for k, c in occ) or "vac"
        return f"|{'e' if s else 'g'};{body}>"

    def mode_number_expectations(self, prob: np.ndarray) -> np.ndarray:
        """Per-mode <n_k> given the basis-state probabilities."""
        return self.occupations.T @ prob


def _shell_patterns(n_modes: int, n_photons: int):
    """Photon configurations with exactly n_photons quanta, lexicographic."""
    for combo in combinations_with_replacement(range(n_modes), n_photons):
        pattern = []
        for k in combo:
            if pattern and pattern[-1][0] == k:
                pattern[-1] = (k, pattern[-1][1] + 1)
            else:
                pattern.append((k, 1))
        yield tuple(pattern)


def build_basis(spec: BasisSpec) -> Basis:
    """Enumerate the truncated basis in the documented fixed order."""
    from math import comb

    cap_photons = spec.max_total_excitations if spec.max_photons is None \
        else min(spec.max_photons, spec.max_total_excitations)
    # cheap size check before enumerating anything big
    count = 0
    for shell in range(spec.max_total_excitations + 1):
        for s in (GROUND, EXCITED):
            p = shell - s
            if p < 0 or p > cap_photons:
                continue
            count += comb(spec.n_modes + p - 1, p)
    if count > spec.max_states:
        raise BasisOverflowError(
            f"basis would need {count} states, exceeding the cap of "
            f"{spec.max_states}")

    states = []
    for shell in range(spec.max_total_excitations + 1):
        for s in (GROUND, EXCITED):
            p = shell - s
            if p < 0 or p > cap_photons:
                continue
            for pattern in _shell_patterns(spec.n_modes, p):
                states.append((s, pattern))
    return Basis(spec, states)


def _lower(pattern, k):
    """Remove one quantum of mode k from an occupation pattern."""
    out = []
    for mode, c in pattern:
        if mode == k:
            if c > 1:
                out.append((mode, c - 1))
        else:
            out.append((mode, c))
    return tuple(out)


def _raise(pattern, k):
    """Add one quantum of mode k, keeping modes sorted."""
    out = list(pattern)
    for i, (mode, c) in enumerate(out):
        if mode == k:
            out[i] = (mode, c + 1)
            return tuple(out)
        if mode > k:
            out.insert(i, (k, 1))
            return tuple(out)
    out.append((k, 1))
    return tuple(out)


def build_annihilation_ops(basis: Basis) -> list:
    """Sparse a_k for every mode, built in one pass over the basis."""
    n = basis.spec.n_modes
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(n)]
    vals = [[] for _ in range(n)]
    for i, (s, occ) in enumerate(basis.states):
        for k, c in occ:
            j = basis.index[(s, _lower(occ, k))]
            rows[k].append(j)
            cols[k].append(i)
            vals[k].append(np.sqrt(c))
    dim = basis.dim
    return [sparse.csr_array((vals[k], (rows[k], cols[k])), shape=(dim, dim))
            for k in range(n)]


def build_hamiltonian(model: ModeModel, emitter: EmitterSpec, basis: Basis):
    """Sparse Hermitian Hamiltonian of emitter plus mode network.

    (omega_e/2) sigma_z + sum_ij omega_ij a_i^dag a_j
    + sum_i g_i (a_i^dag + a_i) sigma_x, with counter-rotating terms kept in
    full; matrix elements leaving the truncated space are dropped.
    """
    if model.n_modes != basis.spec.n_modes:
        raise ValueError(
            f"model has {model.n_modes} modes but basis was built for "
            f"{basis.spec.n_modes}")
    omega = model.omega_mat
    g = model.g
    dim = basis.dim
    idx = basis.index

    diag = np.where(basis.emitter_excited, 0.5, -0.5) * emitter.omega_e
    diag = diag + basis.occupations @ np.diag(omega)

    rows, cols, vals = [], [], []
    # hopping part of sum_ij omega_ij a_i^dag a_j (i != j); lowering j then
    # raising i never changes the photon count, so targets stay in the basis
    neighbors = [np.nonzero(omega[j])[0] for j in range(model.n_modes)]
    any_offdiag = any(len(nb) > 1 or (len(nb) == 1 and nb[0] != j)
                      for j, nb in enumerate(neighbors))
    if any_offdiag:
        for a, (s, occ) in enumerate(basis.states):
            for j, nj in occ:
                low = _lower(occ, j)
                for i in neighbors[j]:
                    if i == j:
                        continue
                    tgt = _raise(low, i)
                    b = idx.get((s, tgt))
                    if b is None:
                        continue
                    ni = dict(low).get(i, 0)
                    rows.append(b)
                    cols.append(a)
                    vals.append(omega[i, j] * np.sqrt(nj * (ni + 1)))

    # coupling g_i (a_i + a_i^dag) sigma_x: assemble the lowering edges
    # (emitter flip plus one photon removed, always inside the basis) and
    # mirror them; raising edges that leave the space are dropped implicitly
    lo_rows, lo_cols, lo_vals = [], [], []
    for a, (s, occ) in enumerate(basis.states):
        flip = 1 - s
        for k, c in occ:
            if g[k] == 0.0:
                continue
            b = idx.get((flip, _lower(occ, k)))
            if b is None:
                continue
            lo_rows.append(b)
            lo_cols.append(a)
            lo_vals.append(g[k] * np.sqrt(c))
    rows.extend(lo_rows + lo_cols)
    cols.extend(lo_cols + lo_rows)
    vals.extend(lo_vals + lo_vals)

    h = sparse.csr_array((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    h = h + sparse.diags_array(diag.astype(complex), format="csr")
    return h.tocsr()


def build_jump_operators(model: ModeModel, basis: Basis) -> list:
    """(a_i, kappa_i) pairs for the Lindblad dissipators."""
    if model.n_modes != basis.spec.n_modes:
        raise ValueError(
            f"model has {model.n_modes} modes but basis was built for "
            f"{basis.spec.n_modes}")
    ops = build_annihilation_ops(basis)
    return [(op, float(k)) for op, k in zip(ops, model.kappa)]


def initial_state_vector(basis: Basis, emitter: EmitterSpec) -> np.ndarray:
    """Emitter in its configured state, all modes in vacuum."""
    psi = np.zeros(basis.dim, dtype=complex)
    s = EXCITED if emitter.initial_state == "excited" else GROUND
    psi[basis.index[(s, ())]] = 1.0
    return psi


def initial_density_matrix(basis: Basis, emitter: EmitterSpec) -> np.ndarray:
    psi = initial_state_vector(basis, emitter)
    return np.outer(psi, psi.conj())


def min_excitation_eigenstate(h, basis: Basis) -> np.ndarray:
    """Hamiltonian eigenvector minimizing the mean total excitation number."""
    h_dense = h.toarray() if sparse.issparse(h) else np.asarray(h)
    _, vecs = np.linalg.eigh(h_dense)
    weights = basis.total_excitation.astype(float)
    mean_exc = (np.abs(vecs) ** 2 * weights[:, None]).sum(axis=0)
    return vecs[:, int(np.argmin(mean_exc))]
