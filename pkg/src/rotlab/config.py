"""Experiment configuration: a strict JSON schema with documented defaults.

Unknown keys are errors, not warnings; a typo in a hyperparameter name must
not silently run the wrong experiment. Validation failures raise ConfigError
carrying the dotted field path (surfaced by the CLI as exit code 2).

The default configuration is the canonical AdamW random walk: B=32,
C=K=128, eta=1.25e-2, lambda=8e-2, 15000 steps, report window
[5000, 15000].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .optimizers import KINDS, OptimizerConfig
from .rotational import GRANULARITIES, ImbalanceSpec, RotationalSet

SYSTEM_MODES = ("random_walk", "synthetic")
SCHEDULE_KINDS = ("constant", "cosine", "warmup", "warmup_cosine")


class ConfigError(ValueError):
    """Invalid configuration; message starts with the dotted field path."""


def _fail(path: str, msg: str) -> None:
    raise ConfigError(f"{path}: {msg}")


def _check_keys(d: Dict[str, Any], allowed, path: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        _fail(f"{path}.{key}" if path else key, "unknown key")


def _get(d: Dict[str, Any], key: str, default, path: str, types, type_name: str):
    if key not in d or d[key] is None:
        return default
    val = d[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, types) or isinstance(val, bool) and types in (int, float):
        _fail(f"{path}.{key}" if path else key, f"expected {type_name}, got {val!r}")
    return val


@dataclass
class SystemConfig:
    B: int = 32
    C: int = 128
    K: int = 128
    loss_scale: float = 1.0
    eps_bn: float = 1e-5
    mode: str = "random_walk"

    def validate(self, path: str = "system") -> "SystemConfig":
        for name in ("B", "C", "K"):
            if getattr(self, name) < 1:
                _fail(f"{path}.{name}", f"must be >= 1, got {getattr(self, name)}")
        if self.loss_scale <= 0:
            _fail(f"{path}.loss_scale", f"must be > 0, got {self.loss_scale}")
        if self.eps_bn < 0:
            _fail(f"{path}.eps_bn", f"must be >= 0, got {self.eps_bn}")
        if self.mode not in SYSTEM_MODES:
            _fail(f"{path}.mode", f"must be one of {SYSTEM_MODES}, got {self.mode!r}")
        return self


@dataclass
class WrapperConfig:
    enabled: bool = False
    beta: float = 0.9
    eps_rv: float = 1e-8
    granularity: str = "neuron"
    center: bool = False
    imbalance: Optional[ImbalanceSpec] = None
    eta_r_override: Optional[float] = None

    def validate(self, path: str = "wrapper") -> "WrapperConfig":
        if not 0 <= self.beta < 1:
            _fail(f"{path}.beta", f"must be in [0, 1), got {self.beta}")
        if self.eps_rv < 0:
            _fail(f"{path}.eps_rv", f"must be >= 0, got {self.eps_rv}")
        if self.granularity not in GRANULARITIES:
            _fail(f"{path}.granularity", f"must be one of {GRANULARITIES}, got {self.granularity!r}")
        if self.imbalance is not None:
            try:
                self.imbalance.validate()
            except ValueError as e:
                _fail(f"{path}.imbalance", str(e))
        if self.eta_r_override is not None and self.eta_r_override <= 0:
            _fail(f"{path}.eta_r_override", f"must be > 0, got {self.eta_r_override}")
        return self

    def rotational_set(self) -> RotationalSet:
        return RotationalSet(
            enabled=self.enabled,
            granularity=self.granularity,
            center=self.center,
            imbalance=self.imbalance,
        )


@dataclass
class Schedule:
    """Learning-rate multiplier per step: constant, half-cosine decay to
    final_fraction, linear warmup over warmup_steps, or warmup then cosine.
    Multipliers always lie in (0, 1]."""

    kind: str = "constant"
    final_fraction: float = 1.0
    warmup_steps: int = 0

    def validate(self, path: str = "schedule") -> "Schedule":
        if self.kind not in SCHEDULE_KINDS:
            _fail(f"{path}.kind", f"must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not 0 < self.final_fraction <= 1:
            _fail(f"{path}.final_fraction", f"must be in (0, 1], got {self.final_fraction}")
        if self.kind in ("warmup", "warmup_cosine") and self.warmup_steps < 1:
            _fail(f"{path}.warmup_steps", f"must be >= 1 for {self.kind}, got {self.warmup_steps}")
        return self

    def multiplier(self, step: int, total_steps: int) -> float:
        """Multiplier for 1-based step number `step` of a total_steps run."""
        m = 1.0
        if self.kind in ("warmup", "warmup_cosine"):
            m *= min(1.0, step / self.warmup_steps)
        if self.kind in ("cosine", "warmup_cosine"):
            progress = (step - 1) / max(total_steps - 1, 1)
            m *= self.final_fraction + (1.0 - self.final_fraction) * 0.5 * (
                1.0 + math.cos(math.pi * progress)
            )
        return m


@dataclass
class TelemetryConfig:
    per_neuron: Optional[bool] = None  # None = auto: on iff K <= 256
    flush_interval: int = 1000

    def validate(self, path: str = "telemetry") -> "TelemetryConfig":
        if self.flush_interval < 1:
            _fail(f"{path}.flush_interval", f"must be >= 1, got {self.flush_interval}")
        return self

    def per_neuron_for(self, K: int) -> bool:
        if self.per_neuron is None:
            return K <= 256
        return self.per_neuron


@dataclass
class ReportConfig:
    burn_in_steps: int = 5000
    tolerance_pct: float = 10.0
    norm_tolerance_pct: Optional[float] = None  # None = same as tolerance_pct
    per_neuron_checks: bool = False
    auto_burn_in: bool = False

    def validate(self, path: str = "report") -> "ReportConfig":
        if self.burn_in_steps < 0:
            _fail(f"{path}.burn_in_steps", f"must be >= 0, got {self.burn_in_steps}")
        if self.tolerance_pct <= 0:
            _fail(f"{path}.tolerance_pct", f"must be > 0, got {self.tolerance_pct}")
        if self.norm_tolerance_pct is not None and self.norm_tolerance_pct <= 0:
            _fail(f"{path}.norm_tolerance_pct", f"must be > 0, got {self.norm_tolerance_pct}")
        return self


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    system: SystemConfig = field(default_factory=SystemConfig)
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(kind="adamw", eta=1.25e-2, weight_decay=8e-2)
    )
    wrapper: WrapperConfig = field(default_factory=WrapperConfig)
    steps: int = 15000
    schedule: Schedule = field(default_factory=Schedule)
    telemetry: TelemetryConfig = field(default_factory=TelemetryConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def validate(self) -> "ExperimentConfig":
        if self.seed < 0:
            _fail("seed", f"must be >= 0, got {self.seed}")
        if self.steps < 1:
            _fail("steps", f"must be >= 1, got {self.steps}")
        self.system.validate()
        try:
            self.optimizer.validate()
        except ConfigError:
            raise
        except ValueError as e:
            _fail("optimizer", str(e))
        self.wrapper.validate()
        self.schedule.validate()
        self.telemetry.validate()
        self.report.validate()
        if self.report.burn_in_steps >= self.steps:
            _fail(
                "report.burn_in_steps",
                f"must be < steps ({self.steps}), got {self.report.burn_in_steps}",
            )
        return self


def _parse_optimizer(d: Dict[str, Any], path: str) -> OptimizerConfig:
    _check_keys(d, ("kind", "eta", "weight_decay", "momentum", "beta1", "beta2", "eps"), path)
    kind = _get(d, "kind", "adamw", path, str, "string")
    if kind not in KINDS:
        _fail(f"{path}.kind", f"must be one of {KINDS}, got {kind!r}")
    return OptimizerConfig(
        kind=kind,
        eta=_get(d, "eta", 1.25e-2, path, float, "number"),
        weight_decay=_get(d, "weight_decay", 8e-2, path, float, "number"),
        momentum=_get(d, "momentum", 0.9, path, float, "number"),
        beta1=_get(d, "beta1", 0.9, path, float, "number"),
        beta2=_get(d, "beta2", 0.999, path, float, "number"),
        eps=_get(d, "eps", 1e-8, path, float, "number"),
    )


def from_dict(d: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed JSON object."""
    if not isinstance(d, dict):
        raise ConfigError(f"config root: expected an object, got {type(d).__name__}")
    _check_keys(
        d,
        ("name", "seed", "system", "optimizer", "wrapper", "steps", "schedule", "telemetry", "report"),
        "",
    )
    sys_d = _get(d, "system", {}, "", dict, "object")
    _check_keys(sys_d, ("B", "C", "K", "loss_scale", "eps_bn", "mode"), "system")
    system = SystemConfig(
        B=_get(sys_d, "B", 32, "system", int, "integer"),
        C=_get(sys_d, "C", 128, "system", int, "integer"),
        K=_get(sys_d, "K", 128, "system", int, "integer"),
        loss_scale=_get(sys_d, "loss_scale", 1.0, "system", float, "number"),
        eps_bn=_get(sys_d, "eps_bn", 1e-5, "system", float, "number"),
        mode=_get(sys_d, "mode", "random_walk", "system", str, "string"),
    )

    optimizer = _parse_optimizer(_get(d, "optimizer", {}, "", dict, "object"), "optimizer")

    wr_d = _get(d, "wrapper", {}, "", dict, "object")
    _check_keys(
        wr_d,
        ("enabled", "beta", "eps_rv", "granularity", "center", "imbalance", "eta_r_override"),
        "wrapper",
    )
    imb = None
    imb_d = _get(wr_d, "imbalance", None, "wrapper", dict, "object")
    if imb_d is not None:
        _check_keys(imb_d, ("p", "f", "mode"), "wrapper.imbalance")
        imb = ImbalanceSpec(
            p=_get(imb_d, "p", 1.0, "wrapper.imbalance", float, "number"),
            f=_get(imb_d, "f", 1.0, "wrapper.imbalance", float, "number"),
            mode=_get(imb_d, "mode", "slow", "wrapper.imbalance", str, "string"),
        )
    wrapper = WrapperConfig(
        enabled=_get(wr_d, "enabled", False, "wrapper", bool, "boolean"),
        beta=_get(wr_d, "beta", 0.9, "wrapper", float, "number"),
        eps_rv=_get(wr_d, "eps_rv", 1e-8, "wrapper", float, "number"),
        granularity=_get(wr_d, "granularity", "neuron", "wrapper", str, "string"),
        center=_get(wr_d, "center", False, "wrapper", bool, "boolean"),
        imbalance=imb,
        eta_r_override=_get(wr_d, "eta_r_override", None, "wrapper", float, "number"),
    )

    sch_d = _get(d, "schedule", {}, "", dict, "object")
    _check_keys(sch_d, ("kind", "final_fraction", "warmup_steps"), "schedule")
    schedule = Schedule(
        kind=_get(sch_d, "kind", "constant", "schedule", str, "string"),
        final_fraction=_get(sch_d, "final_fraction", 1.0, "schedule", float, "number"),
        warmup_steps=_get(sch_d, "warmup_steps", 0, "schedule", int, "integer"),
    )

    tel_d = _get(d, "telemetry", {}, "", dict, "object")
    _check_keys(tel_d, ("per_neuron", "flush_interval"), "telemetry")
    telemetry = TelemetryConfig(
        per_neuron=_get(tel_d, "per_neuron", None, "telemetry", bool, "boolean"),
        flush_interval=_get(tel_d, "flush_interval", 1000, "telemetry", int, "integer"),
    )

    rep_d = _get(d, "report", {}, "", dict, "object")
    _check_keys(
        rep_d,
        ("burn_in_steps", "tolerance_pct", "norm_tolerance_pct", "per_neuron_checks", "auto_burn_in"),
        "report",
    )
    report = ReportConfig(
        burn_in_steps=_get(rep_d, "burn_in_steps", 5000, "report", int, "integer"),
        tolerance_pct=_get(rep_d, "tolerance_pct", 10.0, "report", float, "number"),
        norm_tolerance_pct=_get(rep_d, "norm_tolerance_pct", None, "report", float, "number"),
        per_neuron_checks=_get(rep_d, "per_neuron_checks", False, "report", bool, "boolean"),
        auto_burn_in=_get(rep_d, "auto_burn_in", False, "report", bool, "boolean"),
    )

    cfg = ExperimentConfig(
        name=_get(d, "name", "experiment", "", str, "string"),
        seed=_get(d, "seed", 0, "", int, "integer"),
        system=system,
        optimizer=optimizer,
        wrapper=wrapper,
        steps=_get(d, "steps", 15000, "", int, "integer"),
        schedule=schedule,
        telemetry=telemetry,
        report=report,
    )
    return cfg.validate()


def to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Canonical JSON form; from_dict(to_dict(cfg)) == cfg field for field."""
    return {
        "name": cfg.name,
        "seed": cfg.seed,
        "system": {
            "B": cfg.system.B,
            "C": cfg.system.C,
            "K": cfg.system.K,
            "loss_scale": cfg.system.loss_scale,
            "eps_bn": cfg.system.eps_bn,
            "mode": cfg.system.mode,
        },
        "optimizer": {
            "kind": cfg.optimizer.kind,
            "eta": cfg.optimizer.eta,
            "weight_decay": cfg.optimizer.weight_decay,
            "momentum": cfg.optimizer.momentum,
            "beta1": cfg.optimizer.beta1,
            "beta2": cfg.optimizer.beta2,
            "eps": cfg.optimizer.eps,
        },
        "wrapper": {
            "enabled": cfg.wrapper.enabled,
            "beta": cfg.wrapper.beta,
            "eps_rv": cfg.wrapper.eps_rv,
            "granularity": cfg.wrapper.granularity,
            "center": cfg.wrapper.center,
            "imbalance": None
            if cfg.wrapper.imbalance is None
            else {
                "p": cfg.wrapper.imbalance.p,
                "f": cfg.wrapper.imbalance.f,
                "mode": cfg.wrapper.imbalance.mode,
            },
            "eta_r_override": cfg.wrapper.eta_r_override,
        },
        "steps": cfg.steps,
        "schedule": {
            "kind": cfg.schedule.kind,
            "final_fraction": cfg.schedule.final_fraction,
            "warmup_steps": cfg.schedule.warmup_steps,
        },
        "telemetry": {
            "per_neuron": cfg.telemetry.per_neuron,
            "flush_interval": cfg.telemetry.flush_interval,
        },
        "report": {
            "burn_in_steps": cfg.report.burn_in_steps,
            "tolerance_pct": cfg.report.tolerance_pct,
            "norm_tolerance_pct": cfg.report.norm_tolerance_pct,
            "per_neuron_checks": cfg.report.per_neuron_checks,
            "auto_burn_in": cfg.report.auto_burn_in,
        },
    }


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config root: invalid JSON ({e})") from e
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=False)
