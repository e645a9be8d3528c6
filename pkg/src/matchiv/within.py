"""Sample restrictions and player-level demeaning (fixed-effect absorption)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .design import DesignPanel
from .errors import ConfigError, EmptySampleError


@dataclass
class AttritionReport:
    """Reconciliation of rows removed by the sample restrictions."""

    rows_in: int
    rows_dropped_no_instrument: int
    rows_dropped_missing_outcome: int
    rows_dropped_single_match: int
    rows_out: int

    def __post_init__(self):
        dropped = (
            self.rows_dropped_no_instrument
            + self.rows_dropped_missing_outcome
            + self.rows_dropped_single_match
        )
        assert self.rows_in == self.rows_out + dropped

    def to_dict(self) -> dict:
        return asdict(self)


def apply_sample_restrictions(design: DesignPanel, outcome: str = "engagement"):
    """Restrict to rows where estimation is defined.

    Order (deterministic, one fixed-point re-check):
      1. drop rows whose every co-player lacked a usable leave-one-out
         history (contributing_peers all zero);
      2. drop rows with a missing outcome (engagement only: last observed
         match per player has no next-match gap);
      3. drop players left with fewer than two rows, re-checked once.

    Returns (restricted DesignPanel, AttritionReport).
    """
    if outcome not in ("engagement", "propagation"):
        raise ConfigError(f"unknown outcome {outcome!r}")
    if design.contributing_peers is None:
        raise ConfigError("instruments must be attached before restrictions")

    n_in = design.n_rows
    keep = design.contributing_peers.sum(axis=1) > 0
    n_no_instr = int((~keep).sum())

    if outcome == "engagement":
        has_outcome = ~np.isnan(design.y_time)
        n_missing = int((keep & ~has_outcome).sum())
        keep &= has_outcome
    else:
        n_missing = 0

    n_single = 0
    n_codes = int(design.player_code.max()) + 1 if design.n_rows else 0
    for _ in range(2):  # second pass is the fixed-point re-check
        counts = np.bincount(design.player_code[keep], minlength=n_codes)
        ok = (counts >= 2)[design.player_code] & keep
        n_single += int((keep & ~ok).sum())
        keep = ok

    n_out = int(keep.sum())
    if n_out == 0:
        raise EmptySampleError("sample restrictions removed every observation")

    report = AttritionReport(
        rows_in=n_in,
        rows_dropped_no_instrument=n_no_instr,
        rows_dropped_missing_outcome=n_missing,
        rows_dropped_single_match=n_single,
        rows_out=n_out,
    )
    return design.take(np.flatnonzero(keep)), report


def demean_by_player(
    columns: np.ndarray, player_code: np.ndarray, overwrite: bool = False
) -> np.ndarray:
    """Subtract each player's mean from every column (within transform).

    Accepts a 1-D or 2-D array; group means use a single deterministic
    bincount reduction, so per-player column sums vanish to accumulation
    tolerance. ``overwrite=True`` demeans a float array in place, which
    halves the memory footprint on very wide/long panels.
    """
    cols = np.asarray(columns, dtype=float)
    squeeze = cols.ndim == 1
    if squeeze:
        cols = cols[:, None]
    n_groups = int(player_code.max()) + 1 if len(player_code) else 0
    counts = np.bincount(player_code, minlength=n_groups).astype(float)
    out = cols if overwrite and cols is columns else np.empty_like(cols)
    for c in range(cols.shape[1]):
        sums = np.bincount(player_code, weights=cols[:, c], minlength=n_groups)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        out[:, c] = cols[:, c] - means[player_code]
    return out[:, 0] if squeeze else out
