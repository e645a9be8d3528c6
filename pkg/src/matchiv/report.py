"""Rendering: regression tables, marginal effects with CIs, priority lists."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np
from scipy import stats

from .errors import ConfigError
from .estimation import EstimationResult

_NUM_FMT = "{:.6g}"


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass
class MarginalEffect:
    """Effect of one extra toxic co-player in a context, by match outcome.

    The win-state effect is the base coefficient plus its x-win
    interaction; its standard error comes from the delta method on the
    coefficient covariance.
    """

    context: str
    outcome: str
    units: str
    loss_effect: float
    loss_se: float
    loss_ci: tuple
    win_effect: float
    win_se: float
    win_ci: tuple

    def cells(self):
        yield (self.context, "loss", self.loss_effect, self.loss_ci)
        yield (self.context, "win", self.win_effect, self.win_ci)

    def to_dict(self) -> dict:
        return {
            "context": self.context,
            "outcome": self.outcome,
            "units": self.units,
            "loss_effect": self.loss_effect,
            "loss_se": self.loss_se,
            "loss_ci": list(self.loss_ci),
            "win_effect": self.win_effect,
            "win_se": self.win_se,
            "win_ci": list(self.win_ci),
        }


def marginal_effects(
    result: EstimationResult,
    outcome: str = "engagement",
    units: str = "hours",
) -> List[MarginalEffect]:
    """Loss/win marginal effects for every base column that has a matching
    ``<name>_x_win`` interaction column."""
    names = list(result.names)
    crit = stats.t.ppf(0.975, result.df_resid) if result.df_resid > 0 else 1.96
    out = []
    for i, name in enumerate(names):
        inter = f"{name}_x_win"
        if inter not in names:
            continue
        j = names.index(inter)
        loss = float(result.beta[i])
        loss_se = float(result.se[i])
        win = loss + float(result.beta[j])
        win_var = result.vcov[i, i] + result.vcov[j, j] + 2.0 * result.vcov[i, j]
        win_se = float(np.sqrt(max(win_var, 0.0)))
        out.append(
            MarginalEffect(
                context=name,
                outcome=outcome,
                units=units,
                loss_effect=loss,
                loss_se=loss_se,
                loss_ci=(loss - crit * loss_se, loss + crit * loss_se),
                win_effect=win,
                win_se=win_se,
                win_ci=(win - crit * win_se, win + crit * win_se),
            )
        )
    if not out:
        raise ConfigError("no base/interaction column pairs found in result")
    return out


def priority_ranking(effects: Sequence[MarginalEffect], objective: str) -> List[dict]:
    """Contexts ranked by descending point estimate of harm for one
    objective; ties put the wider confidence interval last."""
    if objective not in ("engagement", "propagation"):
        raise ConfigError(f"unknown objective {objective!r}")
    cells = []
    for eff in effects:
        if eff.outcome != objective:
            continue
        for context, state, est, ci in eff.cells():
            cells.append(
                {
                    "context": context,
                    "result": state,
                    "estimate": est,
                    "ci95": list(ci),
                    "ci_width": ci[1] - ci[0],
                }
            )
    if not cells:
        raise ConfigError(f"no effects cover objective {objective!r}")
    ranked = sorted(
        enumerate(cells),
        key=lambda t: (-t[1]["estimate"], t[1]["ci_width"], t[0]),
    )
    out = []
    for rank, (_, cell) in enumerate(ranked, start=1):
        cell = dict(cell)
        cell["rank"] = rank
        del cell["ci_width"]
        out.append(cell)
    return out


def effects_to_csv(effects: Sequence[MarginalEffect]) -> str:
    """One row per (context, result) cell, ready for external plotting."""
    lines = ["context,outcome,result,units,estimate,se,ci_low,ci_high"]
    for e in effects:
        lines.append(
            f"{e.context},{e.outcome},loss,{e.units},"
            f"{_NUM_FMT.format(e.loss_effect)},{_NUM_FMT.format(e.loss_se)},"
            f"{_NUM_FMT.format(e.loss_ci[0])},{_NUM_FMT.format(e.loss_ci[1])}"
        )
        lines.append(
            f"{e.context},{e.outcome},win,{e.units},"
            f"{_NUM_FMT.format(e.win_effect)},{_NUM_FMT.format(e.win_se)},"
            f"{_NUM_FMT.format(e.win_ci[0])},{_NUM_FMT.format(e.win_ci[1])}"
        )
    return "\n".join(lines) + "\n"


def _table_payload(results: Dict[str, EstimationResult]) -> dict:
    row_names: List[str] = []
    for res in results.values():
        for name in res.names:
            if name not in row_names:
                row_names.append(name)
    columns = {}
    for label, res in results.items():
        cells = {}
        for i, name in enumerate(res.names):
            cells[name] = {
                "coef": float(_NUM_FMT.format(res.beta[i])),
                "se": float(_NUM_FMT.format(res.se[i])),
                "stars": significance_stars(float(res.p_values[i])),
            }
        f_stats = {
            b.endog_name: (None if np.isinf(b.f_stat) else float(_NUM_FMT.format(b.f_stat)))
            for b in res.first_stage
        }
        columns[label] = {
            "cells": cells,
            "n_obs": res.n_obs,
            "f_stats": f_stats,
            "f_capped": {b.endog_name: b.f_capped for b in res.first_stage},
        }
    return {"rows": row_names, "columns": columns}


def render_regression_table(
    results: Union[EstimationResult, Dict[str, EstimationResult]],
    fmt: str = "text",
) -> str:
    """Regression table: regressors as rows, outcomes/models as columns,
    standard errors in parentheses and significance stars on coefficients.

    The text, json, and csv renderings carry identical numeric content at
    the printed precision.
    """
    if isinstance(results, EstimationResult):
        results = {"estimate": results}
    payload = _table_payload(results)

    if fmt == "json":
        return json.dumps(payload, indent=2) + "\n"

    if fmt == "csv":
        lines = ["regressor,column,coef,stars,se"]
        for name in payload["rows"]:
            for label, col in payload["columns"].items():
                cell = col["cells"].get(name)
                if cell is None:
                    continue
                lines.append(f"{name},{label},{_NUM_FMT.format(cell['coef'])},"
                             f"{cell['stars']},{_NUM_FMT.format(cell['se'])}")
        for label, col in payload["columns"].items():
            for endog, f in col["f_stats"].items():
                shown = "inf" if f is None else _NUM_FMT.format(f)
                lines.append(f"F[{endog}],{label},{shown},,")
        return "\n".join(lines) + "\n"

    if fmt != "text":
        raise ConfigError(f"unknown table format {fmt!r}")

    labels = list(payload["columns"])
    width = max([24] + [len(l) + 2 for l in labels])
    name_w = max([20] + [len(r) + 2 for r in payload["rows"]])
    sep = "-" * (name_w + width * len(labels))
    lines = [sep, " " * name_w + "".join(l.rjust(width) for l in labels), sep]
    for name in payload["rows"]:
        coef_line = name.ljust(name_w)
        se_line = " " * name_w
        for label in labels:
            cell = payload["columns"][label]["cells"].get(name)
            if cell is None:
                coef_line += "".rjust(width)
                se_line += "".rjust(width)
            else:
                coef_line += (_NUM_FMT.format(cell["coef"]) + cell["stars"]).rjust(width)
                se_line += f"({_NUM_FMT.format(cell['se'])})".rjust(width)
        lines.append(coef_line)
        lines.append(se_line)
    lines.append(sep)
    f_rows = sorted({e for col in payload["columns"].values() for e in col["f_stats"]})
    for endog in f_rows:
        line = f"F [{endog}]".ljust(name_w)
        for label in labels:
            f = payload["columns"][label]["f_stats"].get(endog)
            capped = payload["columns"][label]["f_capped"].get(endog, False)
            if endog not in payload["columns"][label]["f_stats"]:
                line += "".rjust(width)
            else:
                line += ("inf (capped)" if capped else _NUM_FMT.format(f)).rjust(width)
        lines.append(line)
    lines.append(sep)
    lines.append("Note: * p<0.1; ** p<0.05; *** p<0.01")
    return "\n".join(lines) + "\n"
