"""Order-of-magnitude detectability of collapse-model noise in SI units.

Oscillators are compared with the amplitude standard quantum limit
``sigma = sqrt(hbar / 2 m w)`` and free masses with ``sqrt(hbar t / m)``.
At large times

    <<N>>                    ~ eta sigma^2 t
    rms deviation of X_{1,2} <= sqrt(2 eta t) sigma^2
    rms deviation of q       <= sqrt(eta t / 3) hbar t / m

Exact values are returned alongside their rounded base-10 exponent.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

HBAR = 1.055e-34            # J s
NUCLEON_MASS = 1.67e-27     # kg
CM2_TO_M2 = 1e4             # a rate per cm^2 is 1e4 times larger per m^2

MODEL_KINDS = ("grw", "csl")
EXPERIMENT_KINDS = ("oscillator", "free-mass")


@dataclass(frozen=True)
class CollapseModelParams:
    """Collapse-model constants; CSL parameters are in cgs units."""

    kind: str = "grw"
    eta0: float = 1e-2               # s^-1 m^-2 per nucleon (GRW / QMUPL)
    gamma: float = 1e-30             # cm^3 s^-1
    alpha_csl: float = 1e10          # cm^-2
    nucleon_density: float = 1e24    # cm^-3

    def __post_init__(self) -> None:
        kind = self.kind.lower()
        if kind == "qmupl":
            kind = "grw"
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown collapse model {self.kind!r}; choose from {MODEL_KINDS}")
        object.__setattr__(self, "kind", kind)
        for name in ("eta0", "gamma", "alpha_csl", "nucleon_density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    nucleon_count: float
    accumulation_time: float
    frequency: float | None = None        # Hz, oscillator only
    mass: float | None = None             # kg; defaults to nucleon_count * NUCLEON_MASS
    quality_factor: float | None = None
    position_accuracy: float | None = None  # m, design sensitivity if known

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {EXPERIMENT_KINDS}")
        if self.kind == "oscillator" and not (self.frequency and self.frequency > 0):
            raise ValueError(f"{self.name}: oscillator experiments need a positive frequency")
        if not self.accumulation_time > 0:
            raise ValueError(f"{self.name}: accumulation_time must be > 0")
        if not self.nucleon_count >= 0:
            raise ValueError(f"{self.name}: nucleon_count must be >= 0")
        if self.mass is None:
            object.__setattr__(self, "mass", self.nucleon_count * NUCLEON_MASS)
        if not self.mass > 0:
            raise ValueError(f"{self.name}: mass must be > 0")

    @classmethod
    def from_mass(cls, name: str, kind: str, mass: float, accumulation_time: float,
                  **kw) -> "ExperimentConfig":
        return cls(name, kind, mass / NUCLEON_MASS, accumulation_time, mass=mass, **kw)

    @classmethod
    def from_bandwidth(cls, name: str, nucleon_count: float, frequency: float,
                       bandwidth: float | None = None, quality_factor: float | None = None,
                       **kw) -> "ExperimentConfig":
        """Oscillator accumulating for ``1/F`` with ``F`` given or ``F = w / 2Q``."""
        if bandwidth is None:
            if quality_factor is None:
                raise ValueError("need either a bandwidth or a quality factor")
            bandwidth = 2 * math.pi * frequency / (2 * quality_factor)
        return cls(name, "oscillator", nucleon_count, 1.0 / bandwidth, frequency=frequency,
                   quality_factor=quality_factor, **kw)

    @property
    def omega(self) -> float:
        if self.frequency is None:
            raise ValueError(f"{self.name}: no frequency")
        return 2 * math.pi * self.frequency


PRESETS: dict[str, ExperimentConfig] = {
    "nanoresonator": ExperimentConfig.from_bandwidth("nanoresonator", 1e12, 19.7e6, bandwidth=903.0),
    "advanced_ligo": ExperimentConfig.from_mass("advanced_ligo", "free-mass", 40.0, 1 / 70),
    "lisa": ExperimentConfig.from_mass("lisa", "free-mass", 2.0, 1e4, position_accuracy=1e-11),
}


def preset(name: str) -> ExperimentConfig:
    key = name.lower().replace("-", "_")
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[key]


def collapse_eta(params: CollapseModelParams, N: float) -> float:
    """Effective ``eta`` in s^-1 m^-2 for ``N`` displaced nucleons."""
    if N < 0:
        raise ValueError("N must be >= 0")
    if params.kind == "grw":
        return params.eta0 * N
    per_cm2 = (params.gamma * N ** (2 / 3) * params.nucleon_density ** (4 / 3)
               * math.sqrt(params.alpha_csl / math.pi))
    return per_cm2 * CM2_TO_M2


def sql_limits(config: ExperimentConfig, hbar: float = HBAR) -> float:
    """``sigma`` for oscillators, ``sqrt(hbar t / m)`` for free masses (metres)."""
    if config.kind == "oscillator":
        return math.sqrt(hbar / (2 * config.mass * config.omega))
    return math.sqrt(hbar * config.accumulation_time / config.mass)


def decade(x: float) -> int:
    """Nearest power of ten, the precision at which these estimates are quoted."""
    if x <= 0:
        raise ValueError("decade needs a positive value")
    return round(math.log10(x))


@dataclass(frozen=True)
class DeviationReport:
    experiment: str
    model: str
    kind: str
    eta: float
    t: float
    sql: float
    rms_bound: float
    ratio_to_sql: float
    occupation_growth: float | None = None
    ratio_to_accuracy: float | None = None
    decades: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def deviation_bounds(config: ExperimentConfig, params: CollapseModelParams,
                     eta: float | None = None, hbar: float = HBAR) -> DeviationReport:
    """Large-time stochastic deviation bounds for one experiment and collapse model.

    ``eta`` overrides the value from :func:`collapse_eta`; together with
    ``hbar`` this lets dimensionless mock experiments be evaluated.
    """
    if eta is None:
        eta = collapse_eta(params, config.nucleon_count)
    t = config.accumulation_time
    sql = sql_limits(config, hbar)
    n_growth = None
    if config.kind == "oscillator":
        n_growth = eta * sql ** 2 * t
        rms = math.sqrt(2 * eta * t) * sql ** 2
    else:
        rms = math.sqrt(eta * t / 3) * sql ** 2
    ratio = rms / sql
    acc = rms / config.position_accuracy if config.position_accuracy else None
    decades = {"eta": decade(eta), "sql": decade(sql), "ratio_to_sql": decade(ratio)} if eta > 0 else {}
    if n_growth is not None and n_growth > 0:
        decades["occupation_growth"] = decade(n_growth)
    if acc:
        decades["ratio_to_accuracy"] = decade(acc)
    return DeviationReport(config.name, params.kind, config.kind, eta, t, sql, rms, ratio,
                           n_growth, acc, decades)


def experiment_table(model_kinds=MODEL_KINDS) -> list[DeviationReport]:
    """Every preset under every requested collapse model."""
    return [deviation_bounds(cfg, CollapseModelParams(kind)) for cfg in PRESETS.values()
            for kind in model_kinds]
