"""Column-wise feature scalers with exact inverses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateError

MINMAX_FLOOR = 1e-11
KINDS = ("minmax", "standard", "robust")


@dataclass(frozen=True, eq=False)
class Scaler:
    """Fitted per-column parameters.

    minmax: loc = min, scale = max - min, output in [1e-11, 1] on the fitted range.
    standard: loc = mean, scale = sample std (ddof=1).
    robust: loc = median, scale = interquartile range.
    """

    kind: str
    loc: np.ndarray
    scale: np.ndarray

    def params(self) -> dict:
        return {"kind": self.kind, "loc": self.loc.tolist(), "scale": self.scale.tolist()}

    def column(self, index: int) -> "Scaler":
        return Scaler(self.kind, self.loc[index:index + 1], self.scale[index:index + 1])


def _as_2d(rows):
    rows = np.asarray(rows, dtype=float)
    return rows[:, None] if rows.ndim == 1 else rows


def fit_scaler(kind: str, rows) -> Scaler:
    if kind not in KINDS:
        raise ValueError(f"unknown scaler kind {kind!r}; expected one of {KINDS}")
    x = _as_2d(rows)
    if x.shape[0] < 2:
        raise ValueError("a scaler needs at least 2 rows to fit")
    if kind == "minmax":
        loc = x.min(axis=0)
        scale = x.max(axis=0) - loc
    elif kind == "standard":
        loc = x.mean(axis=0)
        scale = x.std(axis=0, ddof=1)
    else:
        loc = np.median(x, axis=0)
        q75, q25 = np.percentile(x, [75, 25], axis=0)
        scale = q75 - q25
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise DegenerateError(f"degenerate column(s) {bad.tolist()}: zero spread under {kind} scaling")
    return Scaler(kind, loc, scale)


def transform(s: Scaler, rows) -> np.ndarray:
    x = np.asarray(rows, dtype=float)
    unit = (x - s.loc) / s.scale
    if s.kind == "minmax":
        return unit * (1.0 - MINMAX_FLOOR) + MINMAX_FLOOR
    return unit


def inverse_transform(s: Scaler, rows) -> np.ndarray:
    x = np.asarray(rows, dtype=float)
    if s.kind == "minmax":
        x = (x - MINMAX_FLOOR) / (1.0 - MINMAX_FLOOR)
    return x * s.scale + s.loc
