"""Data ingestion, the end-to-end fit, and the structured risk report."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dual import DualTransform, phi
from .errors import BoundViolationError, DomainError, InsufficientDataError
from .gpd import (
    FitMethod,
    GpdFit,
    GpdParams,
    _mle_starts,
    fit_mle,
    maximize_log_likelihood,
    moment_exists,
    observed_std_errors,
)
from .shadow import RiskMeasures, ShadowModel, h_sensitivity, risk_measures, shadow_log_likelihood

DEFAULT_THRESHOLD_QUANTILE = 0.95
MIN_EXCEEDANCES = 30
SCHEMA_ID = "shadowtail.report/1"


class SampleFormatError(ValueError):
    """Unparseable or non-finite input, with the offending line number."""


class NonFrechetTailWarning(UserWarning):
    """The fitted dual tail has xi <= 0, so it is not a power law."""


@dataclass(frozen=True)
class TailSample:
    values: np.ndarray
    source: str = "inline"
    digest: str | None = None

    @property
    def n_total(self) -> int:
        return int(self.values.size)

    def n_exceedances(self, u: float) -> int:
        return int(np.count_nonzero(self.values > u))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _parse_float(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SampleFormatError(f"line {line}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise SampleFormatError(f"line {line}: non-finite value {text!r}")
    return value


def parse_csv(text: str, column: int = 0) -> list[float]:
    """One numeric column; a non-numeric first row is taken as a header."""
    values = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if column >= len(row):
            raise SampleFormatError(f"line {line_no}: no column {column}")
        cell = row[column].strip()
        if line_no == 1:
            try:
                float(cell)
            except ValueError:
                continue
        values.append(_parse_float(cell, line_no))
    return values


def parse_jsonl(text: str) -> list[float]:
    """One number per line, either bare or as {"value": number}."""
    values = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SampleFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from None
        if isinstance(record, dict) and "value" in record:
            record = record["value"]
        if isinstance(record, bool) or not isinstance(record, (int, float)):
            raise SampleFormatError(f"line {line_no}: expected a number, got {record!r}")
        if not math.isfinite(record):
            raise SampleFormatError(f"line {line_no}: non-finite value")
        values.append(float(record))
    return values


def load_sample(path: str | os.PathLike, column: int = 0, fmt: str | None = None) -> TailSample:
    raw = Path(path).read_bytes()
    text = raw.decode("utf-8-sig")
    if fmt is None:
        fmt = "jsonl" if str(path).lower().endswith((".jsonl", ".ndjson", ".json")) else "csv"
    values = parse_jsonl(text) if fmt == "jsonl" else parse_csv(text, column)
    if not values:
        raise SampleFormatError(f"{path}: no observations")
    return TailSample(np.array(values, dtype=float), str(path), "sha256:" + hashlib.sha256(raw).hexdigest())


def as_sample(data) -> TailSample:
    if isinstance(data, TailSample):
        return data
    values = np.asarray(data, dtype=float).ravel()
    digest = "sha256:" + hashlib.sha256(values.tobytes()).hexdigest()
    return TailSample(values, "inline", digest)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def check_bounds(values: np.ndarray, L: float, H: float) -> None:
    if not L < H:
        raise DomainError(f"need L < H, got L={L}, H={H}")
    above = np.flatnonzero(values >= H)
    if above.size:
        rows = (above + 1).tolist()
        shown = ", ".join(map(str, rows[:10])) + (" ..." if len(rows) > 10 else "")
        raise BoundViolationError(
            f"{len(rows)} observation(s) >= upper bound H={H} (rows {shown})", rows
        )
    below = np.flatnonzero(values < L)
    if below.size:
        rows = (below + 1).tolist()
        shown = ", ".join(map(str, rows[:10])) + (" ..." if len(rows) > 10 else "")
        raise BoundViolationError(
            f"{len(rows)} observation(s) below lower bound L={L} (rows {shown})", rows
        )


def resolve_threshold(values: np.ndarray, threshold: float | None, quantile: float | None) -> float:
    if threshold is not None:
        return float(threshold)
    q = DEFAULT_THRESHOLD_QUANTILE if quantile is None else float(quantile)
    if not 0 <= q < 1:
        raise DomainError(f"threshold quantile must lie in [0, 1), got {q}")
    return float(np.quantile(values, q))


def fit_shadow_model(
    sample,
    L: float,
    H: float,
    threshold: float | None = None,
    threshold_quantile: float | None = None,
    space: str = "dual",
    min_exceedances: int = MIN_EXCEEDANCES,
) -> tuple[ShadowModel | None, GpdFit]:
    """Fit the dual GPD tail above u and return the implied shadow model.

    ``space="dual"`` maximises the GPD likelihood of the transformed excesses
    phi(y) - phi(u); ``space="original"`` maximises the likelihood of the raw
    observations under the induced density on [u, H). The two objectives
    differ by the constant sum(log(H / (H - y))), so they share an argmax.

    When the fitted shape is not positive the tail is not a power law; a
    NonFrechetTailWarning is issued and the model is None.
    """
    s = as_sample(sample)
    y = s.values
    if y.size == 0:
        raise InsufficientDataError("empty sample")
    check_bounds(y, L, H)
    u = resolve_threshold(y, threshold, threshold_quantile)
    if not L <= u < H:
        raise DomainError(f"threshold u={u} must lie in [L, H)")
    exc = np.sort(y[y > u])
    if exc.size < min_exceedances:
        raise InsufficientDataError(f"{exc.size} exceedances of u={u}; need {min_exceedances}")
    t = DualTransform(L, H)
    w = phi(t, exc) - phi(t, u)

    if space == "dual":
        fit = fit_mle(w, threshold=u)
    elif space == "original":
        loglik = lambda xi, sigma: shadow_log_likelihood(xi, sigma, u, H, exc)
        xi, sigma, ll = maximize_log_likelihood(loglik, _mle_starts(np.sort(w)))
        fit = GpdFit(
            params=GpdParams(xi, sigma),
            threshold=u,
            n_excesses=int(exc.size),
            log_likelihood=ll,
            method=FitMethod.MLE,
            std_errors=observed_std_errors(loglik, xi, sigma),
        )
    else:
        raise ValueError(f"space must be 'dual' or 'original', got {space!r}")

    if not fit.params.xi > 0:
        warnings.warn(
            f"fitted dual shape xi={fit.params.xi:.4g} <= 0: the tail above u does not "
            "behave as a power law, shadow risk measures are not computed",
            NonFrechetTailWarning,
            stacklevel=2,
        )
        return None, fit
    return ShadowModel(fit.params.alpha, fit.params.sigma, L, H, u), fit


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def timestamp() -> str:
    """UTC time of the run; SOURCE_DATE_EPOCH pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch
        else _dt.datetime.now(_dt.timezone.utc)
    )
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _fit_dict(fit: GpdFit | None) -> dict | None:
    if fit is None:
        return None
    p = fit.params
    return {
        "method": fit.method.value,
        "xi": p.xi,
        "sigma": p.sigma,
        "alpha": 1.0 / p.xi if p.xi > 0 else None,
        "threshold": fit.threshold,
        "n_excesses": fit.n_excesses,
        "log_likelihood": fit.log_likelihood,
        "std_errors": (
            {"xi": fit.std_errors[0], "sigma": fit.std_errors[1]} if fit.std_errors else None
        ),
    }


def model_dict(m: ShadowModel | None) -> dict | None:
    if m is None:
        return None
    return {"alpha": m.alpha, "sigma": m.sigma, "L": m.L, "H": m.H, "u": m.u}


def measures_dict(r: RiskMeasures | None) -> dict | None:
    if r is None:
        return None
    return {
        "shadow_mean": r.shadow_mean,
        "var": [{"p": p, "value": v} for p, v in r.var_levels],
        "es": [{"p": p, "value": v} for p, v in r.es_levels],
        "dual_mean_finite": r.dual_mean_finite,
    }


def build_report(
    sample: TailSample,
    L: float,
    H: float,
    model: ShadowModel | None,
    fit: GpdFit,
    threshold_quantile: float | None,
    var_levels: Sequence[float] = (0.95, 0.99),
    es_levels: Sequence[float] = (0.95, 0.99),
    h_grid: Sequence[float] | None = None,
    seed: int | None = None,
    notes: Sequence[str] = (),
) -> dict:
    """Assemble the report tree in its fixed field order."""
    u = fit.threshold
    y = sample.values
    exc = y[y > u]
    report_warnings = list(notes)
    try:
        naive_fit = fit_mle(exc - u, threshold=u)
    except (ValueError, RuntimeError) as exc_info:
        naive_fit = None
        report_warnings.append(f"naive GPD fit on raw excesses failed: {exc_info}")
    measures = risk_measures(model, var_levels, es_levels) if model is not None else None
    sensitivity = None
    if model is not None and h_grid:
        sensitivity = [
            {"H": h, "shadow_mean": v}
            for h, v in h_sensitivity(model.alpha, model.sigma, L, u, h_grid)
        ]
    return {
        "schema": SCHEMA_ID,
        "provenance": {
            "input_digest": sample.digest,
            "seed": seed,
            "tool_version": __version__,
            "timestamp": timestamp(),
        },
        "input": {
            "source": sample.source,
            "n_total": sample.n_total,
            "n_exceedances": int(exc.size),
            "lower_bound": float(L),
            "upper_bound": float(H),
            "threshold": u,
            "threshold_quantile": threshold_quantile,
            "sample_max": float(np.max(y)),
        },
        "fit": _fit_dict(fit),
        "model": model_dict(model),
        "measures": measures_dict(measures),
        "naive": {
            "sample_mean_above_u": float(np.mean(exc)),
            "naive_gpd_fit_on_Y": _fit_dict(naive_fit),
            "dual_mean_finite": moment_exists(fit.params, 1),
        },
        "sensitivity": sensitivity,
        "warnings": report_warnings,
    }


def _format_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return "%.17g" % x


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, int, float, np.integer, np.floating)):
        return _format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def report_schema() -> dict:
    from importlib import resources

    return json.loads(resources.files("shadowtail").joinpath("report_schema.json").read_text())


def model_from_report(report: dict) -> ShadowModel:
    m = report.get("model")
    if not m:
        raise DomainError("report carries no shadow model (dual tail was not power-law)")
    return ShadowModel(m["alpha"], m["sigma"], m["L"], m["H"], m["u"])
