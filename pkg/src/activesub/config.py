"""Experiment configuration, serialization, and result-file writers.

Configs are JSON with a fixed schema; numeric spectra are given as
base-10 exponents.  All floats in result tables are written in scientific
notation with 17 significant digits so that byte-identical files certify
byte-identical results.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .distributions import Distribution, StandardNormal, UniformBall, UniformBox
from .exceptions import ConfigError
from .problems import DEFAULT_SPECTRUM_EXPONENTS
from .subspace import GradientFunction, QuadraticForm

__all__ = [
    "ProblemConfig",
    "SubspaceConfig",
    "MseConfig",
    "PerturbationConfig",
    "McmcConfig",
    "BayesConfig",
    "ExperimentConfig",
    "RunManifest",
    "fmt_float",
    "write_table",
    "write_matrix_csv",
    "subspace_to_json",
    "parse_distribution",
    "load_custom_model",
]


def _require_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ProblemConfig:
    kind: str = "quadratic_gaussian"
    n: int = 10
    k: int | None = 2
    spectrum_exponents: list[float] = field(
        default_factory=lambda: list(DEFAULT_SPECTRUM_EXPONENTS)
    )
    w_seed: int = 0
    model_file: str | None = None

    def __post_init__(self):
        if self.kind not in ("quadratic_gaussian", "custom"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if self.kind == "quadratic_gaussian":
            exps = np.asarray(self.spectrum_exponents, dtype=float)
            if exps.shape != (self.n,):
                raise ConfigError("spectrum_exponents length must equal n")
            if np.any(np.diff(exps) > 0):
                raise ConfigError("spectrum exponents must be descending")
            if self.k is not None and not (1 <= self.k <= self.n - 1):
                raise ConfigError("problem k out of range")
        elif self.model_file is None:
            raise ConfigError("custom problems need a model_file")


@dataclass
class SubspaceConfig:
    m_samples: int | None = None  # default 100 * n at use time
    batch_size: int = 4096

    def __post_init__(self):
        if self.m_samples is not None and self.m_samples < 1:
            raise ConfigError("m_samples must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class MseConfig:
    n_values: list[int] = field(default_factory=lambda: [2, 5, 10, 20, 50, 100])
    n_x: int = 10_000
    n_z: int = 1_000

    def __post_init__(self):
        vals = list(self.n_values)
        if not vals or any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("n_values must be strictly increasing positive integers")
        if self.n_x < 2 or self.n_z < 2:
            raise ConfigError("n_x and n_z must be at least 2")


@dataclass
class PerturbationConfig:
    epsilons: list[float] = field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    n_values: list[int] = field(default_factory=lambda: [10, 100])
    n_x: int = 2_000
    n_z: int = 200

    def __post_init__(self):
        if not self.epsilons or any(not 0 < e < 2 for e in self.epsilons):
            raise ConfigError("epsilons must lie in (0, 2)")
        vals = list(self.n_values)
        if not vals or any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("n_values must be strictly increasing positive integers")
        if self.n_x < 2 or self.n_z < 2:
            raise ConfigError("n_x and n_z must be at least 2")


@dataclass
class McmcConfig:
    steps: int = 100_000
    burn_in: int = 10_000
    proposal_std: float | None = None  # default 2.4 / sqrt(k)

    def __post_init__(self):
        if self.steps < self.burn_in or self.burn_in < 0:
            raise ConfigError("need steps >= burn_in >= 0")
        if self.proposal_std is not None and self.proposal_std <= 0:
            raise ConfigError("proposal_std must be positive")


@dataclass
class BayesConfig:
    forward: list[list[float]] = field(
        default_factory=lambda: [[2.0, 0.8], [0.0, 0.4]]
    )
    data: list[float] = field(default_factory=lambda: [0.6, -0.2])
    noise_cov: list[list[float]] = field(
        default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]]
    )
    k: int | None = None  # default: largest spectral gap
    grid_lo: float = -8.0
    grid_hi: float = 8.0
    grid_points: int = 400
    n_values: list[int] = field(default_factory=lambda: [2, 8, 32, 128])
    realizations: int = 200
    z_mc_samples: int = 200_000
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if isinstance(self.mcmc, dict):
            _require_keys(self.mcmc, {f.name for f in dataclasses.fields(McmcConfig)}, "bayes.mcmc")
            self.mcmc = McmcConfig(**self.mcmc)
        g = np.asarray(self.forward, dtype=float)
        if g.ndim != 2:
            raise ConfigError("forward must be a matrix")
        if len(self.data) != g.shape[0]:
            raise ConfigError("data length must match forward rows")
        if self.grid_points < 2 or not self.grid_hi > self.grid_lo:
            raise ConfigError("invalid grid specification")
        vals = list(self.n_values)
        if not vals or any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("n_values must be strictly increasing positive integers")
        if self.realizations < 2 or self.z_mc_samples < 2:
            raise ConfigError("realizations and z_mc_samples must be at least 2")


@dataclass
class ExperimentConfig:
    seed: int = 20_250_101
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    subspace: SubspaceConfig = field(default_factory=SubspaceConfig)
    mse: MseConfig = field(default_factory=MseConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    bayes: BayesConfig = field(default_factory=BayesConfig)

    def __post_init__(self):
        for name, cls in (
            ("problem", ProblemConfig),
            ("subspace", SubspaceConfig),
            ("mse", MseConfig),
            ("perturbation", PerturbationConfig),
            ("bayes", BayesConfig),
        ):
            val = getattr(self, name)
            if isinstance(val, dict):
                _require_keys(val, {f.name for f in dataclasses.fields(cls)}, name)
                setattr(self, name, cls(**val))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _require_keys(d, {f.name for f in dataclasses.fields(cls)}, "config")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Provenance record written next to every experiment's outputs.

    The timestamp honors SOURCE_DATE_EPOCH when set, so archived runs can
    be byte-reproducible end to end.
    """

    config_hash: str
    version: str = __version__
    created_utc: str = ""
    stage_seeds: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def __post_init__(self):
        if not self.created_utc:
            epoch = os.environ.get("SOURCE_DATE_EPOCH")
            stamp = int(epoch) if epoch is not None else int(time.time())
            self.created_utc = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(stamp))

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- result writers ----------------------------------------------------------


def fmt_float(x: float) -> str:
    """Scientific notation with 17 significant digits (round-trip exact)."""
    return f"{x:.16e}"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return fmt_float(float(value))
    return str(value)


def write_table(path: str, header: list[str], rows: list[tuple], fmt: str = "csv") -> str:
    """Write a result table as CSV (default) or a JSON list of records.

    Returns the path actually written (the extension follows the format).
    """
    base, _ = os.path.splitext(path)
    if fmt == "csv":
        out = base + ".csv"
        lines = [",".join(header)]
        lines += [",".join(_cell(v) for v in row) for row in rows]
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        return out
    if fmt == "json":
        out = base + ".json"
        records = []
        for row in rows:
            rec = {}
            for key, value in zip(header, row):
                if isinstance(value, (np.bool_, bool)):
                    rec[key] = bool(value)
                elif isinstance(value, (int, np.integer)):
                    rec[key] = int(value)
                elif isinstance(value, (float, np.floating)):
                    rec[key] = float(value)
                else:
                    rec[key] = value
            records.append(rec)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(records, fh, indent=2)
            fh.write("\n")
        return out
    raise ConfigError(f"unknown output format {fmt!r}")


def write_matrix_csv(path: str, matrix: np.ndarray) -> str:
    """Row-major CSV with full-precision scientific notation."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(fmt_float(v) for v in row) + "\n")
    return path


def subspace_to_json(path: str, subspace, seed: int | None = None, m_samples: int | None = None) -> str:
    """Subspace bundle as JSON: {n, k, eigenvalues, W, seed, M}."""
    payload = {
        "n": int(subspace.n),
        "k": int(subspace.k),
        "eigenvalues": [float(v) for v in subspace.eigenvalues],
        "W": [[float(v) for v in row] for row in subspace.w],
        "seed": seed,
        "M": m_samples,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path


# -- distribution / custom model parsing -------------------------------------


def parse_distribution(d: dict) -> Distribution:
    """Distribution from config: kind string plus body parameters."""
    _require_keys(d, {"kind", "dim", "lo", "hi", "center", "radius"}, "distribution")
    kind = d.get("kind")
    if kind == "standard_normal":
        return StandardNormal(int(d["dim"]))
    if kind == "uniform_box":
        return UniformBox(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))
    if kind == "uniform_ball":
        return UniformBall(np.asarray(d["center"], dtype=float), float(d["radius"]))
    raise ConfigError(f"unknown distribution kind {kind!r}")


def load_custom_model(path: str) -> tuple[GradientFunction, Distribution]:
    """Load a quadratic model file: {n, distribution, quadratic{h, b, c}}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    _require_keys(data, {"n", "distribution", "quadratic"}, "model file")
    n = int(data["n"])
    dist = parse_distribution(data["distribution"])
    if dist.dim != n:
        raise ConfigError("model dimension and distribution dimension differ")
    qspec = data["quadratic"]
    _require_keys(qspec, {"h", "b", "c"}, "quadratic model")
    quad = QuadraticForm(
        h=np.asarray(qspec["h"], dtype=float),
        b=np.asarray(qspec.get("b", np.zeros(n)), dtype=float),
        c=float(qspec.get("c", 0.0)),
    )
    if quad.dim != n:
        raise ConfigError("quadratic model dimension mismatch")
    return GradientFunction.from_quadratic(quad), dist
