"""End-to-end analysis: session logs in, selection and gain tables out.

Pipeline order: drop excluded participants, drop manually excluded
sentences, reference every scored trial to its block threshold, fit one
logistic curve per sentence, gate on fit quality, select the most
homogeneous subset, and derive the per-sentence equalization gains.
Screening statistics (participant, sentence and word-count effects on the
adjusted levels) ride along in the report.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .psychometrics import (
    AnalysisError,
    PsychometricFit,
    SelectionResult,
    TrialObservation,
    averaged_curve_slope,
    equalization_gains,
    fit_logistic,
    select_sentences,
)
from .sessionlog import LogError, SessionLog, read_flat_table, replay_staircase
from .staircase import StaircaseConfig
from .stats import AnovaResult, TukeyResult, anova_oneway, tukey_hsd


@dataclass(frozen=True)
class AnalysisParams:
    n_select: int = 120
    r2_min: float = 0.5
    exclude_sentences: tuple[str, ...] = ()      # e.g. flagged in listening checks
    exclude_participants: tuple[str, ...] = ()
    require_valid_blocks: bool = True


@dataclass
class AnalysisReport:
    observations: int
    participants: list[str]
    fits: list[PsychometricFit]
    selection: SelectionResult
    gains: dict[str, float]
    slope_all: float
    slope_equalized: float
    anova_participant: Optional[AnovaResult] = None
    tukey_participant_outliers: list[str] = field(default_factory=list)
    anova_sentence: Optional[AnovaResult] = None
    anova_word_count: Optional[AnovaResult] = None
    anova_cohort: Optional[AnovaResult] = None


def observations_from_logs(logs: Sequence[SessionLog],
                           params: AnalysisParams) -> list[tuple[str, TrialObservation]]:
    """(participant, observation) pairs from the final attempt of usable blocks."""
    out: list[tuple[str, TrialObservation]] = []
    for log in logs:
        participant = str(log.header.get("patient", {}).get("code") or log.session_id)
        if participant in params.exclude_participants:
            continue
        srt_by_block: dict[int, float] = {}
        finals = log.final_attempts()
        for row in log.block_results():
            if row["attempt"] != finals[row["block"]]:
                continue
            if params.require_valid_blocks and not row["valid"]:
                continue
            if row["srt"] is None:
                continue
            srt_by_block[row["block"]] = row["srt"]
        for t in log.scored_trials():
            if t["block"] not in srt_by_block:
                continue
            if t["sentence_id"] in params.exclude_sentences:
                continue
            out.append((participant, TrialObservation(
                sentence_id=t["sentence_id"],
                atsl=t["level"] - srt_by_block[t["block"]],
                words_total=t["words_total"],
                words_correct=t["words_correct"],
            )))
    return out


def logs_from_flat_table(path: Path | str, config: StaircaseConfig) -> list[SessionLog]:
    """Rebuild minimal logs from the flat trial table.

    The table carries no thresholds, so each participant-block is replayed
    through the staircase engine; recorded levels must match the replay.
    """
    rows = read_flat_table(path)
    by_participant: dict[str, list[dict]] = defaultdict(list)
    for row in rows:
        by_participant[row["participant"]].append(row)

    from .sessionlog import make_header

    logs = []
    for participant, prows in by_participant.items():
        prows.sort(key=lambda r: (r["block"], r["trial"]))
        header = make_header(
            session_id=participant, created_at="", patient={"code": participant},
            condition="SV0", config=config, seed=0, retry_cap=5,
        )
        log_rows = []
        for r in prows:
            log_rows.append({
                "kind": "trial", "block": r["block"], "attempt": 1,
                "trial": r["trial"], "sentence_id": r["sentence_id"],
                "level": r["level"], "snr": r["level"] - config.competing_level,
                "words_total": r["words_total"], "words_correct": r["words_correct"],
                "is_training": r["training"],
            })
        log = SessionLog(header, log_rows)
        for rep in replay_staircase(log):
            if rep.estimate is None:
                raise LogError(
                    f"{participant} block {rep.block}: table ends before the block does"
                )
            log.rows.append({
                "kind": "block_result", "block": rep.block, "attempt": rep.attempt,
                "srt": rep.estimate.value, "midpoints": list(rep.estimate.midpoints),
                "n_midpoints": rep.estimate.n_midpoints, "valid": rep.estimate.valid,
            })
        log.rows.append({"kind": "end", "status": "complete", "reason": None})
        logs.append(log)
    return logs


def _anova_by(pairs, key_fn) -> Optional[AnovaResult]:
    groups = defaultdict(list)
    for participant, obs in pairs:
        groups[key_fn(participant, obs)].append(obs.atsl)
    if len(groups) < 2:
        return None
    return anova_oneway(list(groups.values()))


def run_analysis(logs: Sequence[SessionLog],
                 params: AnalysisParams = AnalysisParams()) -> AnalysisReport:
    pairs = observations_from_logs(logs, params)
    if not pairs:
        raise AnalysisError("no usable observations after exclusions")

    participants = sorted({p for p, _ in pairs})
    by_sentence: dict[str, list[TrialObservation]] = defaultdict(list)
    for _, obs in pairs:
        by_sentence[obs.sentence_id].append(obs)
    fits = [fit_logistic(obs_list) for _, obs_list in sorted(by_sentence.items())]

    selection = select_sentences(fits, params.n_select, params.r2_min)
    gains = equalization_gains(selection, fits)

    fit_by_id = {f.sentence_id: f for f in fits}
    selected_fits = [fit_by_id[sid] for sid in selection.selected_ids]
    equalized = [
        PsychometricFit(f.sentence_id, f.a + f.b * gains[f.sentence_id], f.b, f.s,
                        f.r - gains[f.sentence_id], f.r_squared, f.n_trials, f.converged)
        for f in selected_fits
    ]

    report = AnalysisReport(
        observations=len(pairs),
        participants=participants,
        fits=fits,
        selection=selection,
        gains=gains,
        slope_all=averaged_curve_slope(fits),
        slope_equalized=averaged_curve_slope(equalized),
    )

    if len(participants) >= 2:
        part_groups = defaultdict(list)
        for participant, obs in pairs:
            part_groups[participant].append(obs.atsl)
        ordered = sorted(part_groups)
        report.anova_participant = anova_oneway([part_groups[p] for p in ordered])
        tukey: TukeyResult = tukey_hsd([part_groups[p] for p in ordered])
        # an outlier participant is one significant against most of the field
        counts = defaultdict(int)
        for comp in tukey.comparisons:
            if comp.significant:
                counts[ordered[comp.group_a]] += 1
                counts[ordered[comp.group_b]] += 1
        cutoff = max(1, (len(ordered) - 1) // 2)
        report.tukey_participant_outliers = sorted(
            p for p, c in counts.items() if c > cutoff
        )
    report.anova_sentence = _anova_by(pairs, lambda p, o: o.sentence_id)
    report.anova_word_count = _anova_by(pairs, lambda p, o: o.words_total)
    cohorts = {
        str(log.header.get("patient", {}).get("cohort", ""))
        for log in logs
    }
    if len(cohorts - {""}) >= 2:
        cohort_of = {
            str(log.header.get("patient", {}).get("code") or log.session_id):
                str(log.header.get("patient", {}).get("cohort", ""))
            for log in logs
        }
        report.anova_cohort = _anova_by(pairs, lambda p, o: cohort_of.get(p, ""))
    return report


def _anova_dict(result: Optional[AnovaResult]) -> Optional[dict]:
    if result is None:
        return None
    return {
        "f": result.f if math.isfinite(result.f) else "inf",
        "df_between": result.df_between,
        "df_within": result.df_within,
        "p_value": result.p_value,
        "degenerate": result.degenerate,
    }


def write_report(report: AnalysisReport, out_dir: Path | str) -> None:
    """Report files: fits table, selection summary, gain table, statistics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["\t".join(("sentence_id", "a", "b", "s", "r", "r_squared", "n",
                        "converged", "selected", "gain_db"))]
    selected = set(report.selection.selected_ids)
    for f in report.fits:
        gain = report.gains.get(f.sentence_id)
        lines.append("\t".join((
            f.sentence_id, f"{f.a:.6f}", f"{f.b:.6f}", f"{f.s:.6f}",
            f"{f.r:.6f}" if math.isfinite(f.r) else "nan",
            f"{f.r_squared:.6f}" if math.isfinite(f.r_squared) else "nan",
            str(f.n_trials),
            "1" if f.converged else "0",
            "1" if f.sentence_id in selected else "0",
            f"{gain:.6f}" if gain is not None else "",
        )))
    (out / "fits.tsv").write_text("\n".join(lines) + "\n")

    sel = report.selection
    (out / "selection.json").write_text(json.dumps({
        "n_selected": len(sel.selected_ids),
        "selected_ids": list(sel.selected_ids),
        "region": {"r_lo": sel.r_lo, "r_hi": sel.r_hi,
                   "s_lo": sel.s_lo, "s_hi": sel.s_hi},
        "median_r": sel.median_r, "median_s": sel.median_s,
        "sd_r": sel.sd_r, "sd_s": sel.sd_s,
        "threshold": sel.threshold,
        "slope_all": report.slope_all,
        "slope_equalized": report.slope_equalized,
    }, indent=2) + "\n")

    gain_lines = ["\t".join(("sentence_id", "gain_db"))]
    for sid in sel.selected_ids:
        gain_lines.append(f"{sid}\t{report.gains[sid]:.6f}")
    (out / "gains.tsv").write_text("\n".join(gain_lines) + "\n")

    (out / "stats.json").write_text(json.dumps({
        "observations": report.observations,
        "participants": report.participants,
        "anova_participant": _anova_dict(report.anova_participant),
        "tukey_participant_outliers": report.tukey_participant_outliers,
        "anova_sentence": _anova_dict(report.anova_sentence),
        "anova_word_count": _anova_dict(report.anova_word_count),
        "anova_cohort": _anova_dict(report.anova_cohort),
    }, indent=2) + "\n")


def apply_gains_to_manifest(corpus_dir: Path | str, gains: dict[str, float],
                            out_path: Path | str) -> None:
    """Copy of sentences.tsv with equalization gains filled for selected ids."""
    from .corpus import SENTENCE_COLUMNS, _read_tsv

    rows = _read_tsv(Path(corpus_dir) / "sentences.tsv", SENTENCE_COLUMNS)
    lines = ["\t".join(SENTENCE_COLUMNS)]
    for row in rows:
        gain = gains.get(row["sentence_id"])
        if gain is not None:
            row["eq_gain_db"] = f"{gain:.6f}"
        lines.append("\t".join(row[c] for c in SENTENCE_COLUMNS))
    Path(out_path).write_text("\n".join(lines) + "\n")
