"""End-to-end estimation: panel -> instruments -> restrictions -> within
transform -> OLS baseline + 2SLS."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .design import DesignPanel, build_exposure_design
from .errors import ConfigError
from .estimation import EstimationResult, ols, tsls
from .history import build_history_index, build_instruments
from .panel import MatchPanel
from .within import AttritionReport, apply_sample_restrictions, demean_by_player

OUTCOMES = ("engagement", "propagation")


@dataclass
class EstimationRun:
    scheme: str
    outcome: str
    units: str
    ols: EstimationResult
    tsls: EstimationResult
    attrition: AttritionReport

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "outcome": self.outcome,
            "units": self.units,
            "ols": self.ols.to_dict(),
            "tsls": self.tsls.to_dict(),
            "attrition": self.attrition.to_dict(),
        }


def attach_instruments(design: DesignPanel, panel: MatchPanel, index=None) -> DesignPanel:
    """Build instrument vectors on the full panel and align them with the
    (possibly draw-filtered) design rows."""
    instr = build_instruments(panel, index=index, scheme=design.scheme)
    design.z = instr.z[design.row_index]
    design.contributing_peers = instr.contributing_peers[design.row_index]
    return design


def estimate_panel(
    panel: MatchPanel,
    scheme: str = "opp_team",
    outcome: str = "engagement",
    vcov_mode: str = "hc1",
    draw_policy: str = "exclude",
    mask: Optional[np.ndarray] = None,
    weak_f_threshold: float = 10.0,
) -> EstimationRun:
    """Full pipeline for one outcome; returns the OLS baseline and the
    leave-one-out 2SLS estimate with attrition accounting."""
    if outcome not in OUTCOMES:
        raise ConfigError(f"unknown outcome {outcome!r}; expected one of {OUTCOMES}")

    design = build_exposure_design(panel, scheme=scheme, mask=mask, draw_policy=draw_policy)
    index = build_history_index(panel)
    design = attach_instruments(design, panel, index=index)
    restricted, attrition = apply_sample_restrictions(design, outcome=outcome)
    del design, index  # keep only the restricted copy on large panels

    y = restricted.y_time if outcome == "engagement" else restricted.y_toxic
    units = "hours" if outcome == "engagement" else "probability"

    # dense player codes for demeaning / clustering in the restricted sample
    _, player = np.unique(restricted.player_code, return_inverse=True)
    n_absorbed = int(player.max()) + 1

    demeaned = np.column_stack([y, restricted.x, restricted.w, restricted.z])
    demean_by_player(demeaned, player, overwrite=True)
    k = restricted.x.shape[1]
    m = restricted.w.shape[1]
    y_d = demeaned[:, 0]
    x_d = demeaned[:, 1 : 1 + k]
    w_d = demeaned[:, 1 + k : 1 + k + m]
    z_d = demeaned[:, 1 + k + m :]

    names = restricted.x_names + restricted.w_names
    ols_res = ols(
        y_d,
        np.hstack([x_d, w_d]),
        vcov_mode=vcov_mode,
        cluster=player,
        n_absorbed=n_absorbed,
        names=names,
    )
    tsls_res = tsls(
        y_d,
        x_d,
        w_d,
        z_d,
        vcov_mode=vcov_mode,
        cluster=player,
        n_absorbed=n_absorbed,
        endog_names=restricted.x_names,
        exog_names=restricted.w_names,
        instrument_names=tuple(f"z_{n}" for n in restricted.x_names),
        weak_f_threshold=weak_f_threshold,
    )
    return EstimationRun(
        scheme=scheme,
        outcome=outcome,
        units=units,
        ols=ols_res,
        tsls=tsls_res,
        attrition=attrition,
    )
