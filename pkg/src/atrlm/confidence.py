"""Line-level confidence scores from frame posteriors, and temperature calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .decoder import greedy_decode
from .emissions import EmissionMatrix, TokenTable
from .errors import CalibrationDegenerateError, DegenerateInputError, InvalidInputError, InvalidParameterError
from .metrics import cer, pearson, spearman

DEFAULT_GRID = (1.0, 6.0, 0.5)
RECOMMENDED_TEMPERATURE = 2.0


class ConfidenceMethod(str, Enum):
    MEAN_BEFORE_CTC = "mean-before-ctc"
    MEAN_AFTER_CTC = "mean-after-ctc"
    MAX_MINUS_SECOND = "max-minus-second"
    ENTROPY = "entropy-based"


def _probs(emissions: EmissionMatrix | np.ndarray, temperature: float) -> np.ndarray:
    if not isinstance(emissions, EmissionMatrix):
        emissions = EmissionMatrix(emissions)
    return emissions.probs(temperature)


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def confidence_mean_before_ctc(emissions, temperature: float = 1.0) -> float:
    """Mean over all frames of the highest posterior."""
    p = _probs(emissions, temperature)
    return _clip01(p.max(axis=1).mean())


def confidence_mean_after_ctc(emissions, temperature: float = 1.0, blank_index: int = 0) -> float:
    """Mean highest posterior over the first frame of each non-blank run of the best path.

    Returns 0 when the best path is all blanks.
    """
    if not isinstance(emissions, EmissionMatrix):
        emissions = EmissionMatrix(emissions)
    p = emissions.probs(temperature)
    path = emissions.frames.argmax(axis=1)
    keep = path != blank_index
    keep[1:] &= path[1:] != path[:-1]
    if not keep.any():
        return 0.0
    return _clip01(p[np.arange(len(path)), path][keep].mean())


def confidence_max_margin(emissions, temperature: float = 1.0) -> float:
    """Mean gap between the two highest posteriors of each frame."""
    p = _probs(emissions, temperature)
    if p.shape[1] < 2:
        raise InvalidInputError("max-minus-second needs at least 2 tokens")
    top2 = np.partition(p, -2, axis=1)[:, -2:]
    return _clip01((top2[:, 1] - top2[:, 0]).mean())


def confidence_entropy(emissions, temperature: float = 1.0) -> float:
    """``1 - mean frame entropy / ln V``: 1 for one-hot frames, 0 for uniform ones."""
    p = _probs(emissions, temperature)
    v = p.shape[1]
    if v < 2:
        raise InvalidInputError("entropy confidence needs at least 2 tokens")
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    h = -plogp.sum(axis=1)
    return _clip01(1.0 - h.mean() / math.log(v))


def confidence(
    emissions,
    method: ConfidenceMethod | str,
    temperature: float = 1.0,
    blank_index: int = 0,
) -> float:
    method = ConfidenceMethod(method)
    if method is ConfidenceMethod.MEAN_AFTER_CTC:
        return confidence_mean_after_ctc(emissions, temperature, blank_index)
    fn: Callable = {
        ConfidenceMethod.MEAN_BEFORE_CTC: confidence_mean_before_ctc,
        ConfidenceMethod.MAX_MINUS_SECOND: confidence_max_margin,
        ConfidenceMethod.ENTROPY: confidence_entropy,
    }[method]
    return fn(emissions, temperature)


def parse_grid(text: str) -> list[float]:
    """Parse ``lo:hi:step`` (inclusive of ``hi``) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            return make_grid(lo, hi, step)
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidParameterError(f"malformed grid {text!r}") from None
    if not values or any(not (v > 0 and math.isfinite(v)) for v in values):
        raise InvalidParameterError(f"grid {text!r} must list positive temperatures")
    return sorted(set(values))


def make_grid(lo: float, hi: float, step: float) -> list[float]:
    if not (lo > 0 and hi >= lo and step > 0 and math.isfinite(hi)):
        raise InvalidParameterError(f"invalid grid {lo}:{hi}:{step}")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + k * step, 10) for k in range(n + 1)]


@dataclass
class GridPoint:
    temperature: float
    pearson_r: float
    spearman_r: float
    p_value: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.pearson_r)


@dataclass
class CalibrationReport:
    """Correlations at every grid temperature; ``chosen_T`` maximizes Pearson r."""

    method: ConfidenceMethod
    grid: list[GridPoint] = field(default_factory=list)
    chosen_T: float = 1.0
    criterion: str = "pearson"

    def point(self, temperature: float) -> GridPoint:
        for g in self.grid:
            if math.isclose(g.temperature, temperature, abs_tol=1e-12):
                return g
        raise KeyError(temperature)

    def to_table(self) -> str:
        lines = [f"method: {self.method.value}", f"{'T':>6} {'pearson':>10} {'spearman':>10} {'p':>12}"]
        for g in self.grid:
            mark = "  *" if g.temperature == self.chosen_T else ""
            lines.append(
                f"{g.temperature:>6.2f} {g.pearson_r:>10.4f} {g.spearman_r:>10.4f} {g.p_value:>12.4g}{mark}"
            )
        lines.append(f"chosen T = {self.chosen_T:g}")
        return "\n".join(lines) + "\n"

    def to_keyvalue(self) -> str:
        lines = ["T pearson spearman p"]
        for g in self.grid:
            lines.append(f"{g.temperature:g} {g.pearson_r!r} {g.spearman_r!r} {g.p_value!r}")
        lines.append(f"chosen_T={self.chosen_T:g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_keyvalue(cls, text: str, method: ConfidenceMethod | str) -> "CalibrationReport":
        report = cls(ConfidenceMethod(method))
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("T "):
                continue
            if line.startswith("chosen_T="):
                report.chosen_T = float(line.split("=", 1)[1])
            else:
                t, r, rho, p = (float(x) for x in line.split())
                report.grid.append(GridPoint(t, r, rho, p))
        return report


def line_confidences(
    emissions: Sequence[EmissionMatrix],
    method: ConfidenceMethod | str,
    temperature: float,
    blank_index: int,
) -> np.ndarray:
    return np.array([confidence(e, method, temperature, blank_index) for e in emissions])


def grid_search_temperature(
    validation: Sequence[tuple[EmissionMatrix, str]],
    table: TokenTable,
    method: ConfidenceMethod | str = ConfidenceMethod.MEAN_AFTER_CTC,
    grid: Sequence[float] | str | None = None,
) -> CalibrationReport:
    """Pick the temperature whose confidences correlate best with 1 - CER.

    Lines are decoded greedily once; the text does not depend on the
    temperature. Grid points where the confidences are constant are recorded
    as NaN and never chosen. Ties in Pearson r go to the smallest T.
    """
    method = ConfidenceMethod(method)
    if grid is None:
        grid = make_grid(*DEFAULT_GRID)
    elif isinstance(grid, str):
        grid = parse_grid(grid)
    grid = sorted(set(float(t) for t in grid))
    if not grid:
        raise InvalidParameterError("empty temperature grid")
    if len(validation) < 3:
        raise CalibrationDegenerateError("calibration needs at least 3 validation lines")

    rates = []
    for emissions, reference in validation:
        hyp = greedy_decode(emissions, table).text
        rates.append(1.0 - cer(reference, hyp) / 100.0)
    rates = np.array(rates)
    if np.all(rates == rates[0]):
        raise CalibrationDegenerateError("recognition rate is identical on every validation line")

    report = CalibrationReport(method)
    mats = [e for e, _ in validation]
    for t in grid:
        conf = line_confidences(mats, method, t, table.blank_index)
        try:
            r, p = pearson(conf, rates)
            rho, _ = spearman(conf, rates)
        except DegenerateInputError:
            r = rho = p = math.nan
        report.grid.append(GridPoint(t, r, rho, p))
    defined = [g for g in report.grid if g.defined]
    if not defined:
        raise CalibrationDegenerateError("confidences are constant at every grid temperature")
    best = max(g.pearson_r for g in defined)
    report.chosen_T = min(g.temperature for g in defined if g.pearson_r == best)
    return report


__all__ = [
    "ConfidenceMethod",
    "CalibrationReport",
    "GridPoint",
    "DEFAULT_GRID",
    "RECOMMENDED_TEMPERATURE",
    "confidence",
    "confidence_mean_before_ctc",
    "confidence_mean_after_ctc",
    "confidence_max_margin",
    "confidence_entropy",
    "grid_search_temperature",
    "line_confidences",
    "make_grid",
    "parse_grid",
]
