"""Experiment configuration: dataclasses, JSON loading, validation and hashing."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..measures import EmpiricalMeasure

FACTOR_KINDS = ("fixed_spectrum", "ginibre_polar", "truncated_unitary")
EXPERIMENTS = ("universality", "oracle-smalln", "convergence", "sample-paths",
               "laplace-limit", "laplace-finite-n", "kernel")


class ConfigError(ValueError):
    pass


@dataclass
class FactorSpec:
    kind: str = "fixed_spectrum"
    atoms: list = None          # measure atoms, expanded to N by their weights
    weights: list = None
    ambient_ratio: float = None  # N_ambient / N for ginibre_polar and truncated_unitary

    def validate(self):
        if self.kind not in FACTOR_KINDS:
            raise ConfigError(f"unknown factor kind {self.kind!r}")
        if self.kind == "fixed_spectrum":
            if not self.atoms:
                raise ConfigError("fixed_spectrum needs atoms")
            try:
                EmpiricalMeasure(self.atoms, self.weights)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        elif self.ambient_ratio is None or self.ambient_ratio <= 1:
            # Ginibre factors need N_ambient/N separated from 1
            raise ConfigError(f"{self.kind} needs ambient_ratio > 1")

    def spectrum(self, N):
        """The N squared singular values of a fixed-spectrum factor."""
        mu = EmpiricalMeasure(self.atoms, self.weights)
        counts = mu.weights * N
        if np.any(np.abs(counts - np.round(counts)) > 1e-9):
            raise ConfigError(f"weights do not split N={N} into whole multiplicities")
        return np.sort(np.repeat(mu.atoms, np.round(counts).astype(int)))[::-1]

    def ambient(self, N):
        return int(round(self.ambient_ratio * N))


@dataclass
class Query:
    c: list
    t: list = None
    M: list = None


@dataclass
class ExperimentConfig:
    experiment: str = "universality"
    N: int = 60
    factors: list = field(default_factory=lambda: [FactorSpec(atoms=[0.5, 2.0])])
    compare_factors: list = None
    queries: list = field(default_factory=lambda: [Query(c=[0.5], t=[1.5])])
    C: float = 10.0
    replicas: int = 2000
    seed: int = 0
    workers: int = 1
    out: str = "out"
    # sample paths
    t_max: float = 10.0
    steps: int = 100
    scheme: str = "exact"
    step: float = None
    # convergence sweep
    N_list: list = field(default_factory=lambda: [50, 100, 200, 400])
    # kernel grid
    x_grid: list = None

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigError("N must be a positive integer")
        if self.replicas < 1:
            raise ConfigError("replicas must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if not self.queries:
            raise ConfigError("no queries")
        for q in self.queries:
            if not q.c or any(c <= 0 for c in q.c):
                raise ConfigError("exponents must be positive")
            if q.t is not None and len(q.t) != len(q.c):
                raise ConfigError("each exponent needs one time")
            if q.M is not None and len(q.M) != len(q.c):
                raise ConfigError("each exponent needs one factor count")
        if self.experiment in ("universality", "oracle-smalln"):
            for q in self.queries:
                if not 0 < sum(q.c) < 1:
                    raise ConfigError("sum of exponents must lie in (0, 1)")
            for f in self.factors + (self.compare_factors or []):
                f.validate()
                if f.kind == "fixed_spectrum":
                    a = np.asarray(f.atoms, dtype=float)
                    if a.min() < 1 / self.C or a.max() > self.C:
                        raise ConfigError(f"atoms outside [1/C, C] with C={self.C}")
                    f.spectrum(self.N)
        if self.experiment == "oracle-smalln":
            if self.N > 3 or any(len(q.c) > 2 for q in self.queries):
                raise ConfigError("small-N oracle needs N <= 3 and k <= 2")
            if any(f.kind != "fixed_spectrum" for f in self.factors):
                raise ConfigError("small-N oracle needs fixed spectra")
        if self.experiment == "sample-paths":
            if self.N > 200 or self.steps < 100 or self.t_max <= 0:
                raise ConfigError("sample-paths needs N <= 200, steps >= 100, t_max > 0")
            if self.scheme not in ("euler", "magnus2", "exact"):
                raise ConfigError(f"unknown scheme {self.scheme!r}")
        return self

    def factor(self, m, compare=False):
        """Spec of factor m (0-based); the list is cycled."""
        fs = self.compare_factors if compare else self.factors
        return fs[m % len(fs)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            for key in ("factors", "compare_factors"):
                if d.get(key) is not None:
                    d[key] = [f if isinstance(f, FactorSpec) else FactorSpec(**f) for f in d[key]]
            if "queries" in d:
                d["queries"] = [q if isinstance(q, Query) else Query(**q) for q in d["queries"]]
            return cls(**d).validate()
        except TypeError as e:
            raise ConfigError(str(e)) from None


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    return ExperimentConfig.from_dict(d)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg):
    """git blob hash of the canonical JSON of the config."""
    data = canonical_json(cfg.to_dict()).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
