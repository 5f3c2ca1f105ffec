"""Measured-versus-predicted comparison reports.

The check stage is a pure function of the stored run outputs: measurements
come from the telemetry CSV, and the gradient statistics that feed the
predictors come from the run summary (they include per-coordinate moments
the CSV schema cannot carry). Re-running the check on the same files yields
a byte-identical report; there are no timestamps.

Prediction policy:
  * passive runs compare the layer-mean angular update and weight norm
    against the mean of per-neuron closed-form predictions (each neuron
    evaluated with its own measured gradient statistics, which matters for
    optimizers whose equilibrium depends on gradient scale);
  * synthetic-mode runs substitute the effective decay lambda + lambda_u,
    per neuron, from the measured radial coefficient;
  * wrapper runs compare each neuron's angular update against the
    theoretical target computed from the inner optimizer's hyperparameters
    times that unit's imbalance multiplier. A configured eta_r_override
    affects only the run, never the prediction, so overriding with a wrong
    value is the negative control: the check must fail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .predictions import (
    EquilibriumPrediction,
    GradientStats,
    NoEquilibrium,
    PredictOutcome,
    predict,
)
from .rotational import resolve_target_eta_r
from .runner import LAYER_NAME, config_hash

AUTO_BURN_IN_TOLERANCE = 0.05


@dataclass
class Check:
    unit: str
    metric: str
    measured: float
    predicted: float
    tolerance_pct: float

    @property
    def rel_err_pct(self) -> float:
        return abs(self.measured - self.predicted) / abs(self.predicted) * 100.0

    @property
    def verdict(self) -> str:
        return "PASS" if self.rel_err_pct <= self.tolerance_pct else "FAIL"

    def to_dict(self) -> Dict:
        return {
            "unit": self.unit,
            "metric": self.metric,
            "measured": self.measured,
            "predicted": self.predicted,
            "rel_err_pct": self.rel_err_pct,
            "tolerance_pct": self.tolerance_pct,
            "verdict": self.verdict,
        }


def load_telemetry(csv_path: str) -> pd.DataFrame:
    """Read a telemetry CSV with exact float round-tripping."""
    return pd.read_csv(csv_path, float_precision="round_trip")


def load_summary(summary_path: str) -> Dict:
    with open(summary_path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def window_stats_per_neuron(df: pd.DataFrame, lo: int, hi: int) -> Dict[str, np.ndarray]:
    """Window means per neuron from the CSV: arithmetic for angles and
    norms, RMS for update sizes."""
    sub = df[(df["step"] >= lo) & (df["step"] <= hi) & (df["neuron"] >= 0)]
    if sub.empty:
        raise ValueError(f"window [{lo}, {hi}] selects no per-neuron rows")
    g = sub.groupby("neuron", sort=True)
    return {
        "neuron": g.size().index.to_numpy(),
        "angular_update": g["angular_update"].mean().to_numpy(),
        "weight_norm": g["weight_norm"].mean().to_numpy(),
        "rms_update": np.sqrt((sub["rms_update"] ** 2).groupby(sub["neuron"]).mean().to_numpy()),
    }


def window_stats_layer(df: pd.DataFrame, lo: int, hi: int) -> Dict[str, float]:
    sub = df[(df["step"] >= lo) & (df["step"] <= hi) & (df["neuron"] == -1)]
    if sub.empty:
        raise ValueError(f"window [{lo}, {hi}] selects no layer-aggregate rows")
    return {
        "angular_update": float(sub["angular_update"].mean()),
        "weight_norm": float(sub["weight_norm"].mean()),
        "rms_update": float(np.sqrt((sub["rms_update"] ** 2).mean())),
    }


def auto_burn_in_step(df: pd.DataFrame, configured_lo: int, hi: int) -> Optional[int]:
    """First step whose layer-mean weight norm is within 5% of the final
    (configured) window's mean norm; None when no step qualifies."""
    agg = df[df["neuron"] == -1]
    final = agg[(agg["step"] >= configured_lo) & (agg["step"] <= hi)]
    target = float(final["weight_norm"].mean())
    if target == 0.0:
        return None
    ok = agg[np.abs(agg["weight_norm"] - target) <= AUTO_BURN_IN_TOLERANCE * abs(target)]
    if ok.empty:
        return None
    return int(ok["step"].min())


def per_neuron_predictions(cfg: ExperimentConfig, summary: Dict) -> List[PredictOutcome]:
    """Closed-form predictions per neuron, from the summary's window
    gradient statistics, substituting each neuron's effective decay in
    synthetic mode."""
    per = summary["per_neuron"]
    C = cfg.system.C
    outcomes: List[PredictOutcome] = []
    for k in range(cfg.system.K):
        stats = GradientStats(
            expected_sq_norm=per["grad_sq_norm_mean"][k],
            unit_norm_expected_sq_norm=per["unit_grad_sq_norm_mean"][k],
            per_coord_sqrt_second_moment=np.asarray(per["per_coord_sqrt_second_moment"][k]),
        )
        opt = cfg.optimizer
        if cfg.system.mode == "synthetic":
            lam_e = opt.weight_decay + per["radial_coeff_mean"][k]
            opt = replace(opt, weight_decay=lam_e)
            if lam_e <= 0:
                outcomes.append(NoEquilibrium("effective decay is not positive"))
                continue
        outcomes.append(predict(opt, C, stats))
    return outcomes


def build_report(cfg: ExperimentConfig, csv_path: str, summary: Dict) -> Dict:
    """Assemble the comparison report for a finished run."""
    cfg.validate()
    df = load_telemetry(csv_path)
    lo, hi = cfg.report.burn_in_steps, cfg.steps
    notes: List[str] = []
    used_auto = False
    if cfg.report.auto_burn_in:
        found = auto_burn_in_step(df, lo, hi)
        if found is None:
            notes.append(
                f"auto burn-in found no step within {AUTO_BURN_IN_TOLERANCE:.0%} of the final "
                f"window norm; keeping configured burn-in {lo}"
            )
        else:
            lo = found
            used_auto = True

    tol = cfg.report.tolerance_pct
    norm_tol = cfg.report.norm_tolerance_pct if cfg.report.norm_tolerance_pct is not None else tol
    checks: List[Check] = []
    layer = window_stats_layer(df, lo, hi)
    have_neuron_rows = bool((df["neuron"] >= 0).any())

    if cfg.wrapper.enabled:
        scales = summary["wrapper"]["imbalance_scale"]
        try:
            base = resolve_target_eta_r(cfg.optimizer, cfg.system.C, override=None)
        except ValueError as e:
            notes.append(f"no theoretical angular target ({e}); nothing to check")
            base = None
        if base is not None:
            if cfg.wrapper.eta_r_override is not None:
                notes.append(
                    "eta_r_override drives the run but predictions use the inner "
                    "optimizer's hyperparameters"
                )
            if have_neuron_rows and cfg.wrapper.granularity == "neuron":
                per = window_stats_per_neuron(df, lo, hi)
                for k, measured in zip(per["neuron"], per["angular_update"]):
                    checks.append(
                        Check(
                            unit=f"{LAYER_NAME}/neuron{k}",
                            metric="angular_update",
                            measured=float(measured),
                            predicted=base * scales[int(k)],
                            tolerance_pct=tol,
                        )
                    )
            else:
                mean_scale = float(np.mean(np.asarray(scales, dtype=np.float64)))
                checks.append(
                    Check(
                        unit=LAYER_NAME,
                        metric="angular_update",
                        measured=layer["angular_update"],
                        predicted=base * mean_scale,
                        tolerance_pct=tol,
                    )
                )
    else:
        outcomes = per_neuron_predictions(cfg, summary)
        eta_r = np.array(
            [o.eta_r_hat if isinstance(o, EquilibriumPrediction) and o.eta_r_hat is not None else np.nan for o in outcomes]
        )
        w_hat = np.array(
            [o.omega_norm_hat if isinstance(o, EquilibriumPrediction) and o.omega_norm_hat is not None else np.nan for o in outcomes]
        )
        n_no_eq = int(np.sum(~np.isfinite(eta_r)))
        if n_no_eq:
            notes.append(f"{n_no_eq} neuron(s) have no equilibrium prediction; excluded from means")
        if np.all(~np.isfinite(eta_r)):
            notes.append("no neuron has an equilibrium prediction; nothing to check")
        else:
            checks.append(
                Check(
                    unit=LAYER_NAME,
                    metric="angular_update",
                    measured=layer["angular_update"],
                    predicted=float(np.nanmean(eta_r)),
                    tolerance_pct=tol,
                )
            )
            checks.append(
                Check(
                    unit=LAYER_NAME,
                    metric="weight_norm",
                    measured=layer["weight_norm"],
                    predicted=float(np.nanmean(w_hat)),
                    tolerance_pct=norm_tol,
                )
            )
            if cfg.report.per_neuron_checks and have_neuron_rows:
                per = window_stats_per_neuron(df, lo, hi)
                for k, measured in zip(per["neuron"], per["angular_update"]):
                    pred = eta_r[int(k)]
                    if not np.isfinite(pred):
                        continue
                    checks.append(
                        Check(
                            unit=f"{LAYER_NAME}/neuron{k}",
                            metric="angular_update",
                            measured=float(measured),
                            predicted=float(pred),
                            tolerance_pct=tol,
                        )
                    )

    all_pass = all(c.verdict == "PASS" for c in checks)
    return {
        "name": cfg.name,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "versions": summary.get("versions", {}),
        "optimizer_kind": cfg.optimizer.kind,
        "mode": cfg.system.mode,
        "wrapper_enabled": cfg.wrapper.enabled,
        "window": {"from": lo, "to": hi, "auto_burn_in": used_auto},
        "downsample_factor": 1,
        "layer_measured": layer,
        "checks": [c.to_dict() for c in checks],
        "notes": notes,
        "all_pass": all_pass,
    }


def check_run(cfg: ExperimentConfig, csv_path: str, summary_path: str) -> Dict:
    return build_report(cfg, csv_path, load_summary(summary_path))
