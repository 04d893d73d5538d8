"""
Report emitters: results-table CSV, per-session files and analysis JSON.

CSV floats carry one decimal like the printed table; JSON keeps full
precision in a fixed key order.
"""

import json
import logging
import os

import numpy as np
import pandas as pd

from erpspeller.core import config

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["subject", "paradigm", "feedback_accuracy_pct", "trials_for_42", "bit_rate"]
SUBJECT_COLUMNS = ["subject", "seed", "first_paradigm", "second_paradigm", "amplitude_scale"]


def subject_label(subject_index):
    return f"S{subject_index + 1}"


def results_frame(cohort):
    """One row per subject and paradigm, MS-P rows first, like the reference table."""
    rows = []
    for paradigm_id in ("MS_P", "LS_P"):
        for subject in cohort.subjects:
            result = subject.sessions[paradigm_id]
            rows.append((subject_label(subject.subject), paradigm_id, result.accuracy_pct,
                         result.trials_total, result.bit_rate))
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def subject_to_dict(subject):
    """Condition order and ERP scale of one cohort subject, stored next to each session result."""
    return {
        "subject": subject_label(subject.subject),
        "seed": int(subject.seed),
        "order": list(subject.order),
        "amplitude_scale": float(subject.amplitude_scale),
    }


def subjects_frame(cohort):
    rows = [(subject_label(s.subject), s.seed, s.order[0], s.order[-1], s.amplitude_scale) for s in cohort.subjects]
    return pd.DataFrame(rows, columns=SUBJECT_COLUMNS)


def session_frame(result, labels=None):
    """Per-block outcome table of one session."""
    rows = []
    for index, block in enumerate(result.blocks):
        rows.append({
            "block_index": index,
            "target": block.target,
            "target_label": labels[block.target] if labels else "",
            "predicted": block.predicted,
            "predicted_label": labels[block.predicted] if labels else "",
            "correct": int(block.predicted == block.target),
            "trials_used": block.trials_used,
            "start_time_s": block.start_time_s,
        })
    return pd.DataFrame(rows)


def write_csv(path, frame, float_format="%.1f"):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "to_dict"):
        return _jsonable(value.to_dict())
    if hasattr(value, "numerator") and hasattr(value, "denominator") and not isinstance(value, int):
        return float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path, document):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(document), f, indent=2)
        f.write("\n")
    logger.info("Wrote %s", path)


def halves_to_dict(report):
    def half(summary):
        return {
            "accuracy_pct": round(summary.accuracy_pct, 1),
            "bit_rate": round(summary.bit_rate, 1),
            "trials_total": summary.trials_total,
            "n_below_accuracy": summary.n_below_accuracy,
            "n_below_bit_rate": summary.n_below_bit_rate,
            "per_character_accuracy_pct": [round(float(100 * a), 1) for a in summary.per_character_accuracy],
            "per_character_bit_rate": [round(r, 1) for r in summary.per_character_bit_rate],
        }
    return {"split_block": report.split_block, "first": half(report.first), "last": half(report.last)}


def fatigue_to_dict(report):
    return {
        "n_subjects": report.n_subjects,
        "theta_fz_first": list(report.theta_fz_first),
        "theta_fz_last": list(report.theta_fz_last),
        "alpha_pz_first": list(report.alpha_pz_first),
        "alpha_pz_last": list(report.alpha_pz_last),
        "theta_test": report.theta_test.to_dict(),
        "alpha_test": report.alpha_test.to_dict(),
    }


def comparison_to_dict(rows):
    return {
        row.variable: {
            "ms_mean": row.ms_mean,
            "ms_sd": row.ms_sd,
            "ls_mean": row.ls_mean,
            "ls_sd": row.ls_sd,
            "paired_t": row.test.to_dict(),
            "ms_normality": row.ms_normality.to_dict() if row.ms_normality else None,
            "ls_normality": row.ls_normality.to_dict() if row.ls_normality else None,
        }
        for row in rows
    }


def order_to_dict(correlation):
    return {
        "accuracy": correlation.accuracy.to_dict(),
        "bit_rate": correlation.bit_rate.to_dict(),
        "per_character_accuracy_pct": [round(a, 1) for a in correlation.per_character_accuracy_pct],
        "per_character_bit_rate": [round(r, 1) for r in correlation.per_character_bit_rate],
    }


def visual_angle_to_dict(report):
    return {
        "angles_deg": list(report.angles_deg),
        "accuracy_pct": [round(a, 1) for a in report.accuracy_pct],
        "bit_rate": [round(r, 1) for r in report.bit_rate],
        "n_blocks": list(report.n_blocks),
        "accuracy_correlation": report.accuracy_correlation.to_dict(),
        "bit_rate_correlation": report.bit_rate_correlation.to_dict(),
    }


def erp_frame(averages, channels=config.CHANNELS):
    """Long-to-wide CSV layout: time_ms then target_/nontarget_/difference_ per channel."""
    columns = {"time_ms": averages.time_ms}
    for kind, data in (("target", averages.target), ("nontarget", averages.nontarget),
                       ("difference", averages.difference)):
        for index, channel in enumerate(channels):
            columns[f"{kind}_{channel}"] = data[index]
    return pd.DataFrame(columns)


def format_table2_check(table, tolerance):
    """Human-readable residual listing for the check-table2 command."""
    lines = [f"{'subject':<8}{'paradigm':<9}{'acc%':>7}{'trials':>8}{'printed':>9}{'computed':>10}{'resid':>8}"]
    for row in table.itertuples(index=False):
        flag = "" if row.within_tolerance else "  <-- outside tolerance"
        lines.append(f"{row.subject:<8}{row.paradigm:<9}{row.accuracy_pct:>7.1f}{row.trials:>8d}"
                     f"{row.bit_rate:>9.1f}{row.computed:>10.2f}{row.residual:>+8.3f}{flag}")
    n_ok = int(table["within_tolerance"].sum())
    lines.append(f"{n_ok}/{len(table)} rows within +/-{tolerance:.2f} bits/min "
                 f"(max |residual| {table['residual'].abs().max():.3f})")
    return "\n".join(lines)
