"""Experiment configuration: flat key = value files with [system], [prior]
and [run] sections, all numeric fields decimal.

Matrix-valued keys accept a scalar, or rows separated by ';' with
whitespace-separated entries ("1 0; 0 1").  A, B, Q, R describe one type
and are shared by all types; D and E may be given either at full width
(d_x x |M| d_x) or as a single d_x x d_x block that is broadcast across
the type columns.  Unspecified keys fall back to the homogeneous scalar
benchmark system.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NotStabilizable
from .inference import SelectionScheme
from .model import SystemSpec, TypeParams
from .tsde import Policy, PriorSpec

__all__ = ["ExperimentConfig", "load_config", "parse_matrix"]

_SYSTEM_DEFAULTS = {
    "num_types": "1",
    "agents_per_type": "10",
    "d_x": "1",
    "d_u": "1",
    "A": "1.0",
    "B": "0.3",
    "D": "0.5",
    "E": "0.2",
    "Q": "1.0",
    "R": "1.0",
    "Q_bar": "1.0",
    "R_bar": "0.5",
    "sigma_w2": "1.0",
    "sigma_v2": "1.0",
    "sigma_v02": "0.0",
    "x0_sigma2": "0.0",
}

_PRIOR_DEFAULTS = {
    "mf_mean": "1 1",
    "rel_mean": "1 1",
    "mf_cov": "1.0",
    "rel_cov": "1.0",
    "delta": "0.99",
    "max_attempts": "1000",
    "joint_mean": "0.0",
    "joint_cov": "1.0",
    "anchored": "true",
}

_RUN_DEFAULTS = {
    "label": "experiment",
    "policy": "tsde_mf",
    "scheme": "max_quad",
    "horizon": "5000",
    "seeds": "500",
    "base_seed": "0",
    "record_stride": "10",
    "bayesian_truth": "false",
    "schemes": "max_quad, fixed, random, all",
}


def parse_matrix(text: str) -> np.ndarray:
    """Parse "1 0; 0 1" style matrix text (scalar text gives a 1x1)."""
    rows = [r for r in text.split(";") if r.strip()]
    try:
        mat = np.array([[float(v) for v in r.split()] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"bad matrix value {text!r}: {exc}") from None
    if mat.ndim != 2 or mat.size == 0 or len({len(r.split()) for r in rows}) != 1:
        raise ConfigError(f"bad matrix value {text!r}: ragged or empty")
    return mat


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split()])
    except ValueError as exc:
        raise ConfigError(f"bad vector value {text!r}: {exc}") from None


def _cov_matrix(text: str, dim: int, name: str) -> np.ndarray:
    mat = parse_matrix(text)
    if mat.shape == (1, 1):
        return float(mat[0, 0]) * np.eye(dim)
    if mat.shape != (dim, dim):
        raise ConfigError(f"{name} must be scalar or {dim}x{dim}, got {mat.shape}")
    return mat


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: system, policy, prior, run parameters."""

    spec: SystemSpec
    policy: Policy
    prior: PriorSpec
    label: str
    horizon: int
    seeds: int
    base_seed: int
    record_stride: int
    bayesian_truth: bool
    schemes: tuple[str, ...]
    verbose_components: bool = False

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def _fit_block(mat: np.ndarray, rows: int, cols: int, num_types: int,
               name: str) -> np.ndarray:
    """Accept a full-width coupling matrix or broadcast a single block."""
    if mat.shape == (rows, cols):
        return mat
    if num_types > 1 and mat.shape == (rows, cols // num_types):
        return np.tile(mat, (1, num_types))
    raise ConfigError(f"{name} must have shape ({rows}, {cols}), got {mat.shape}")


def _build_spec(sec) -> SystemSpec:
    M = sec.getint("num_types")
    n = sec.getint("agents_per_type")
    dx = sec.getint("d_x")
    du = sec.getint("d_u")
    A = parse_matrix(sec["A"])
    B = parse_matrix(sec["B"])
    Q = parse_matrix(sec["Q"])
    R = parse_matrix(sec["R"])
    D = _fit_block(parse_matrix(sec["D"]), dx, M * dx, M, "D")
    E = _fit_block(parse_matrix(sec["E"]), dx, M * du, M, "E")
    Q_bar = _cov_matrix(sec["Q_bar"], M * dx, "Q_bar")
    R_bar = _cov_matrix(sec["R_bar"], M * du, "R_bar")
    per_type = tuple(
        TypeParams(A=A, B=B, D=D, E=E, Q=Q, R=R) for _ in range(M)
    )
    try:
        return SystemSpec(
            num_types=M, agents_per_type=n, d_x=dx, d_u=du,
            per_type=per_type, Q_bar=Q_bar, R_bar=R_bar,
            sigma_w2=sec.getfloat("sigma_w2"),
            sigma_v2=sec.getfloat("sigma_v2"),
            sigma_v02=sec.getfloat("sigma_v02"),
            x0_sigma2=sec.getfloat("x0_sigma2"),
        )
    except (ValueError, NotStabilizable) as exc:
        raise ConfigError(f"invalid system: {exc}") from None


def _build_prior(sec, spec: SystemSpec) -> PriorSpec:
    p_mf = spec.num_types * (spec.d_x + spec.d_u)
    p_rel = spec.d_x + spec.d_u
    mf_mean = _parse_vector(sec["mf_mean"])
    rel_mean = _parse_vector(sec["rel_mean"])
    if mf_mean.shape != (p_mf,):
        raise ConfigError(f"mf_mean must have {p_mf} entries, got {mf_mean.size}")
    if rel_mean.shape != (p_rel,):
        raise ConfigError(f"rel_mean must have {p_rel} entries, got {rel_mean.size}")
    return PriorSpec(
        mf_mean=mf_mean,
        rel_mean=rel_mean,
        mf_cov=_cov_matrix(sec["mf_cov"], p_mf, "mf_cov"),
        rel_cov=_cov_matrix(sec["rel_cov"], p_rel, "rel_cov"),
        delta=sec.getfloat("delta"),
        max_attempts=sec.getint("max_attempts"),
        joint_mean_fill=sec.getfloat("joint_mean"),
        joint_cov_scale=sec.getfloat("joint_cov"),
        anchored_sets=sec.getboolean("anchored"),
    )


def load_config(
    path: str | Path,
    *,
    seeds: int | None = None,
    horizon: int | None = None,
    policy: str | None = None,
    scheme: str | None = None,
    verbose_components: bool = False,
) -> ExperimentConfig:
    """Read an experiment file, applying any command-line overrides."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text())
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section, defaults in (("system", _SYSTEM_DEFAULTS),
                              ("prior", _PRIOR_DEFAULTS),
                              ("run", _RUN_DEFAULTS)):
        if not parser.has_section(section):
            parser.add_section(section)
        for key, val in defaults.items():
            if not parser.has_option(section, key):
                parser.set(section, key, val)

    try:
        spec = _build_spec(parser["system"])
        prior = _build_prior(parser["prior"], spec)
        run = parser["run"]
        policy_kind = policy or run["policy"]
        scheme_text = scheme or run["scheme"]
        sel = SelectionScheme.parse(scheme_text)
        pol = Policy(kind=policy_kind, scheme=sel)
        cfg = ExperimentConfig(
            spec=spec,
            policy=pol,
            prior=prior,
            label=run["label"],
            horizon=horizon if horizon is not None else run.getint("horizon"),
            seeds=seeds if seeds is not None else run.getint("seeds"),
            base_seed=run.getint("base_seed"),
            record_stride=run.getint("record_stride"),
            bayesian_truth=run.getboolean("bayesian_truth"),
            schemes=tuple(s.strip() for s in run["schemes"].split(",") if s.strip()),
            verbose_components=verbose_components,
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config {path}: {exc}") from None
    if cfg.horizon < 1 or cfg.seeds < 1 or cfg.record_stride < 1:
        raise ConfigError("horizon, seeds and record_stride must be >= 1")
    return cfg
