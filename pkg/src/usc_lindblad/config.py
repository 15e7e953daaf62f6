"""Run configuration: JSON schema, validation and object construction.

A run config declares the energy unit, the target spectral density, the
emitter, and the fit / basis / dynamics / oracle sections. Cross references
(mode counts, window signs, grid consistency) are checked at load time so
commands fail fast with a line of context instead of deep in a run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fit import DEFAULT_PENALTY_SCHEDULE, FitConfig, default_neg_grid, default_pos_grid
from .fock import BasisSpec, EmitterSpec
from .oracle import DiscretizationSpec
from .spectral import LorentzianParams, SingleModeOhmicParams, TabulatedSD, \
    eval_lorentzian, eval_single_mode_ohmic, eval_tabulated, read_tabulated_csv
from .units import SUPPORTED_UNITS

__all__ = ["ConfigError", "RunConfig", "load_config", "builtin_preset",
           "preset_names"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    units: str
    target_spec: dict
    emitter: EmitterSpec
    fit: FitConfig
    basis: BasisSpec
    t_max: float
    n_outputs: int
    tol: float
    atol: float
    oracle: DiscretizationSpec | None
    oracle_basis: BasisSpec | None
    outputs: Path
    steady_horizon: float
    steady_tol: float
    raw: dict = field(repr=False, default_factory=dict)

    def target(self):
        """Callable spectral density J(omega)."""
        kind = self.target_spec["kind"]
        if kind == "lorentzian":
            p = LorentzianParams(self.target_spec["omega_c"],
                                 self.target_spec["g"], self.target_spec["kappa"])
            return lambda w: eval_lorentzian(p, w)
        if kind == "single_mode_ohmic":
            p = SingleModeOhmicParams(self.target_spec["omega_c"],
                                      self.target_spec["g"], self.target_spec["kappa"])
            return lambda w: eval_single_mode_ohmic(p, w)
        if kind == "tabulated":
            table = read_tabulated_csv(self.target_spec["path"])
            return lambda w: eval_tabulated(table, w)
        raise ConfigError(f"unknown target kind {kind!r}")

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_outputs + 1)


def _need(section: dict, key, where, types=None):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in {where}")
    val = section[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{where}.{key} has wrong type {type(val).__name__}")
    return val


def _build_fit(section: dict, omega_e: float) -> FitConfig:
    n_modes = int(_need(section, "n_modes", "fit", (int,)))
    thr = float(_need(section, "neg_threshold", "fit", (int, float)))
    window = section.get("pos_window")
    if window is None:
        window = [None, 5.0 * omega_e]
    if len(window) != 2:
        raise ConfigError("fit.pos_window must be [lo, hi]")
    hi = float(window[1])
    n_pos = int(section.get("pos_points", 2000))
    if window[0] is None:
        pos_grid = default_pos_grid(hi, n_pos)
    else:
        lo = float(window[0])
        if lo <= 0 or lo >= hi:
            raise ConfigError("fit.pos_window must satisfy 0 < lo < hi")
        pos_grid = np.linspace(lo, hi, n_pos)
    neg_edge = float(section.get("neg_edge", -hi))
    n_neg = int(section.get("neg_points", 400))
    if n_neg > 0:
        if neg_edge >= 0:
            raise ConfigError("fit.neg_edge must be negative")
        neg_grid = default_neg_grid(omega_e, neg_edge, n_neg)
    else:
        neg_grid = np.zeros(0)
    try:
        return FitConfig(
            n_modes=n_modes, neg_threshold=thr, pos_grid=pos_grid,
            neg_grid=neg_grid,
            max_iterations=int(section.get("max_iterations", 200)),
            n_restarts=int(section.get("n_restarts", 4)),
            rng_seed=int(section.get("rng_seed", 0)),
            penalty_schedule=tuple(section.get("penalty_schedule",
                                               DEFAULT_PENALTY_SCHEDULE)))
    except ValueError as exc:
        raise ConfigError(f"fit section: {exc}") from exc


def load_config(path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    return parse_config(raw, base_dir=path.parent, seed_override=seed_override)


def parse_config(raw: dict, base_dir: Path | None = None,
                 seed_override: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    units = _need(raw, "units", "config", str)
    if units not in SUPPORTED_UNITS:
        raise ConfigError(f"units must be one of {SUPPORTED_UNITS}, got {units!r}")

    tgt = dict(_need(raw, "target", "config", dict))
    kind = _need(tgt, "kind", "target", str)
    if kind in ("lorentzian", "single_mode_ohmic"):
        for key in ("omega_c", "g", "kappa"):
            _need(tgt, key, "target", (int, float))
    elif kind == "tabulated":
        p = Path(_need(tgt, "path", "target", str))
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        tgt["path"] = str(p)
    else:
        raise ConfigError(f"unknown target kind {kind!r}")

    em = _need(raw, "emitter", "config", dict)
    try:
        emitter = EmitterSpec(float(_need(em, "omega_e", "emitter", (int, float))),
                              em.get("initial_state", "excited"))
    except ValueError as exc:
        raise ConfigError(f"emitter section: {exc}") from exc

    fit_cfg = _build_fit(dict(_need(raw, "fit", "config", dict)), emitter.omega_e)
    if seed_override is not None:
        from dataclasses import replace
        fit_cfg = replace(fit_cfg, rng_seed=int(seed_override))

    bas = dict(raw.get("basis", {}))
    try:
        basis = BasisSpec(
            n_modes=fit_cfg.n_modes,
            max_total_excitations=int(bas.get("max_total_excitations", 3)),
            max_photons=bas.get("max_photons"),
            max_states=int(bas.get("max_states", 200_000)))
    except ValueError as exc:
        raise ConfigError(f"basis section: {exc}") from exc

    dyn = dict(raw.get("dynamics", {}))
    t_max = float(dyn.get("t_max", 120.0))
    n_outputs = int(dyn.get("n_outputs", 400))
    tol = float(dyn.get("tol", 1e-8))
    atol = float(dyn.get("atol", 1e-10))
    if t_max <= 0 or n_outputs < 1 or tol <= 0:
        raise ConfigError("dynamics section: t_max, n_outputs, tol must be positive")

    orc = raw.get("oracle")
    oracle = oracle_basis = None
    if orc is not None:
        orc = dict(orc)
        try:
            oracle = DiscretizationSpec(
                omega_min=float(_need(orc, "omega_min", "oracle", (int, float))),
                omega_max=float(_need(orc, "omega_max", "oracle", (int, float))),
                n_points=int(orc.get("n_points", 400)),
                scheme=orc.get("scheme", "uniform"))
            oracle_basis = BasisSpec(
                n_modes=oracle.n_points,
                max_total_excitations=int(
                    orc.get("max_total_excitations", basis.max_total_excitations)),
                max_photons=orc.get("max_photons"),
                max_states=int(orc.get("max_states", 2_000_000)))
        except ValueError as exc:
            raise ConfigError(f"oracle section: {exc}") from exc

    outputs = Path(raw.get("outputs", "runs"))
    if base_dir is not None and not outputs.is_absolute():
        outputs = base_dir / outputs

    return RunConfig(units=units, target_spec=tgt, emitter=emitter, fit=fit_cfg,
                     basis=basis, t_max=t_max, n_outputs=n_outputs, tol=tol,
                     atol=atol, oracle=oracle, oracle_basis=oracle_basis,
                     outputs=outputs,
                     steady_horizon=float(raw.get("steady_horizon", 10.0 * t_max)),
                     steady_tol=float(raw.get("steady_tol", 1e-9)),
                     raw=raw)


def preset_names() -> list:
    from importlib import resources

    out = []
    for entry in resources.files("usc_lindblad.presets").iterdir():
        if entry.name.endswith(".json"):
            out.append(entry.name[:-5])
    return sorted(out)


def builtin_preset(name: str) -> dict:
    """Raw dict of a bundled scenario preset."""
    from importlib import resources

    ref = resources.files("usc_lindblad.presets") / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return json.loads(ref.read_text(encoding="utf-8"))
