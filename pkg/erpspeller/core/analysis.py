"""
Performance metrics, fatigue band-power analysis and the statistics toolbox.

Functions here take SessionResult-like objects (``blocks`` with ``target``,
``predicted`` and ``trials_used``) and plain arrays; nothing is mutated.
"""

import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pandas as pd
from scipy import stats

from erpspeller.core import config
from erpspeller.core import dsp
from erpspeller.core.errors import ValidationError

logger = logging.getLogger(__name__)


class StatTest(enum.Enum):
    PAIRED_T = "paired_t"
    KS_NORMAL = "ks_normal"
    PEARSON = "pearson"
    SPEARMAN = "spearman"


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    n: int
    test_id: StatTest
    df: int = None

    @property
    def significant(self):
        return self.p_value < config.ALPHA_LEVEL

    def to_dict(self):
        return {"test": self.test_id.value, "statistic": self.statistic, "p_value": self.p_value,
                "n": self.n, "df": self.df}


def _clip_p(p):
    return float(min(max(p, 0.0), 1.0))


def _as_vector(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be a finite 1-D sample")
    return x


# Statistics

def paired_t_test(a, b):
    """Two-sided paired-samples t-test.

    Identical samples give t = 0, p = 1. A constant nonzero difference gives
    an infinite t with p = 0.
    """
    a, b = _as_vector(a, "a"), _as_vector(b, "b")
    if len(a) != len(b):
        raise ValidationError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValidationError("paired t-test needs at least 2 pairs")
    n = len(a)
    d = a - b
    if np.all(d == 0):
        return StatResult(0.0, 1.0, n, StatTest.PAIRED_T, n - 1)
    if np.std(d, ddof=1) == 0:
        return StatResult(math.copysign(math.inf, d[0]), 0.0, n, StatTest.PAIRED_T, n - 1)
    result = stats.ttest_rel(a, b)
    return StatResult(float(result.statistic), _clip_p(result.pvalue), n, StatTest.PAIRED_T, n - 1)


def ks_normality(x, lilliefors=False, n_mc_samples=2000, seed=0):
    """One-sample Kolmogorov-Smirnov test against a fitted normal.

    Args:
        x: Sample of at least 4 values
        lilliefors (bool): Calibrate the p-value for the estimated parameters
            by Monte Carlo instead of the plain asymptotic distribution
        n_mc_samples (int): Monte Carlo draws when ``lilliefors`` is set
        seed (int): Monte Carlo seed

    Returns:
        StatResult: D statistic and p-value
    """
    x = _as_vector(x, "x")
    if len(x) < 4:
        raise ValidationError(f"KS normality test needs at least 4 values, got {len(x)}")
    sd = np.std(x, ddof=1)
    if sd == 0:
        raise ValidationError("KS normality test rejects a constant sample")
    if lilliefors:
        result = stats.goodness_of_fit(stats.norm, x, statistic="ks", n_mc_samples=n_mc_samples,
                                       random_state=np.random.default_rng(seed))
    else:
        result = stats.kstest(x, "norm", args=(np.mean(x), sd), method="asymp")
    return StatResult(float(result.statistic), _clip_p(result.pvalue), len(x), StatTest.KS_NORMAL)


def _check_pair(x, y):
    x, y = _as_vector(x, "x"), _as_vector(y, "y")
    if len(x) != len(y):
        raise ValidationError(f"correlation samples differ in length: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise ValidationError("correlation needs at least 3 pairs")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValidationError("correlation is undefined for a zero-variance sample")
    return x, y


def pearson(x, y):
    """Pearson r with the two-sided t-distribution p-value."""
    x, y = _check_pair(x, y)
    result = stats.pearsonr(x, y)
    return StatResult(float(result.statistic), _clip_p(result.pvalue), len(x), StatTest.PEARSON, len(x) - 2)


def spearman(x, y):
    """Spearman rank correlation (average ranks for ties)."""
    x, y = _check_pair(x, y)
    result = stats.spearmanr(x, y)
    return StatResult(float(result.statistic), _clip_p(result.pvalue), len(x), StatTest.SPEARMAN, len(x) - 2)


# Performance metrics

def accuracy_fraction(result):
    """Exact fraction of blocks whose prediction hit the target."""
    blocks = result.blocks
    if not blocks:
        raise ValidationError("result has no blocks")
    return Fraction(sum(1 for b in blocks if b.predicted == b.target), len(blocks))


def feedback_accuracy(result):
    """Online feedback accuracy in percent."""
    return float(100 * accuracy_fraction(result))


def bits_per_selection(p, n_items=config.N_ITEMS):
    """Wolpaw bits per selection, 0 below chance."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"accuracy must lie in [0, 1], got {p}")
    if n_items < 2:
        raise ValidationError("bit rate needs at least 2 items")
    if p < 1.0 / n_items:
        return 0.0
    bits = math.log2(n_items)
    if p > 0:
        bits += p * math.log2(p)
    if p < 1:
        bits += (1 - p) * math.log2((1 - p) / (n_items - 1))
    return bits


def bit_rate(p, n_items=config.N_ITEMS, trials_total=None, trial_s=config.TRIAL_S, n_selections=config.N_ITEMS):
    """Bits per minute over flashing time only.

    Args:
        p (float): Accuracy as a fraction
        n_items (int): Selectable items
        trials_total (float): Trials spent on ``n_selections`` selections
        trial_s (float): Seconds per trial
        n_selections (int): Selections made

    Returns:
        float: bits/min
    """
    if trials_total is None or trials_total <= 0:
        raise ValidationError(f"trials_total must be positive, got {trials_total}")
    selections_per_min = 60.0 / (trials_total / n_selections * trial_s)
    return bits_per_selection(p, n_items) * selections_per_min


def result_bit_rate(result, n_items=config.N_ITEMS, trial_s=config.TRIAL_S):
    trials_total = sum(b.trials_used for b in result.blocks)
    return bit_rate(accuracy_fraction(result), n_items, trials_total, trial_s, len(result.blocks))


def accuracy_by_trials(flash_scores, events, block_targets, flash_code, max_trials=config.MAX_TRIALS):
    """Character accuracy when averaging a fixed number of trials.

    Args:
        flash_scores (numpy.ndarray): One score per event
        events (list): FlashEvent objects of a full-length offline recording
        block_targets (list): Target item per block, indexed from the first block
        flash_code (FlashCode): Flash code

    Returns:
        numpy.ndarray: Accuracy fraction for 1..max_trials averaged trials
    """
    flash_scores = np.asarray(flash_scores, dtype=float)
    blocks = np.array([e.block_index for e in events])
    trials = np.array([e.trial_index for e in events])
    groups = np.array([e.group_id for e in events])
    block_ids = np.unique(blocks)
    n_trials = min(max_trials, int(trials.max()) + 1)

    correct = np.zeros(n_trials)
    for offset, block in enumerate(block_ids):
        per_trial = np.zeros((n_trials, flash_code.n_groups))
        mask = (blocks == block) & (trials < n_trials)
        np.add.at(per_trial, (trials[mask], groups[mask]), flash_scores[mask])
        pair_sums = np.cumsum(per_trial, axis=0) @ flash_code.membership.T
        correct += np.argmax(pair_sums, axis=1) == block_targets[offset]
    return correct / len(block_ids)


def single_flash_auc(flash_scores, labels):
    """Area under the ROC curve of target versus nontarget flash scores."""
    flash_scores = np.asarray(flash_scores, dtype=float)
    labels = np.asarray(labels)
    target, nontarget = flash_scores[labels > 0], flash_scores[labels <= 0]
    if len(target) == 0 or len(nontarget) == 0:
        raise ValidationError("AUC needs both target and nontarget flashes")
    u = stats.mannwhitneyu(target, nontarget, alternative="two-sided").statistic
    return float(u / (len(target) * len(nontarget)))


# First half versus last half

@dataclass(frozen=True)
class HalfSummary:
    accuracy: Fraction
    bit_rate: float
    trials_total: int
    per_character_accuracy: tuple
    per_character_bit_rate: tuple
    n_below_accuracy: int
    n_below_bit_rate: int

    @property
    def accuracy_pct(self):
        return float(100 * self.accuracy)


@dataclass(frozen=True)
class HalvesReport:
    first: HalfSummary
    last: HalfSummary
    split_block: int


def _as_results(results):
    if hasattr(results, "blocks"):
        return [results]
    results = list(results)
    if not results:
        raise ValidationError("no session results given")
    return results


def per_character(results, n_items=config.N_ITEMS, trial_s=config.TRIAL_S):
    """Accuracy fraction and bit rate at each block position across results.

    Returns:
        tuple: (list of Fraction, list of float bits/min)
    """
    results = _as_results(results)
    n_blocks = len(results[0].blocks)
    if any(len(r.blocks) != n_blocks for r in results):
        raise ValidationError("results differ in block count")
    accuracy, rates = [], []
    for position in range(n_blocks):
        blocks = [r.blocks[position] for r in results]
        hit = Fraction(sum(1 for b in blocks if b.predicted == b.target), len(blocks))
        trials = sum(b.trials_used for b in blocks)
        accuracy.append(hit)
        rates.append(bit_rate(hit, n_items, trials, trial_s, len(blocks)))
    return accuracy, rates


def _half(results, positions, accuracy, rates, accuracy_threshold, bit_rate_threshold, n_items, trial_s):
    blocks = [r.blocks[i] for r in results for i in positions]
    hit = Fraction(sum(1 for b in blocks if b.predicted == b.target), len(blocks))
    trials = sum(b.trials_used for b in blocks)
    char_acc = tuple(accuracy[i] for i in positions)
    char_rate = tuple(rates[i] for i in positions)
    return HalfSummary(
        accuracy=hit,
        bit_rate=bit_rate(hit, n_items, trials, trial_s, len(blocks)),
        trials_total=trials,
        per_character_accuracy=char_acc,
        per_character_bit_rate=char_rate,
        n_below_accuracy=sum(1 for a in char_acc if 100 * a < accuracy_threshold),
        n_below_bit_rate=sum(1 for r in char_rate if r < bit_rate_threshold),
    )


def halves_comparison(results, split_block=config.ONLINE_BLOCKS // 2,
                      accuracy_threshold=config.ACCURACY_THRESHOLD_PCT,
                      bit_rate_threshold=config.BIT_RATE_THRESHOLD,
                      n_items=config.N_ITEMS, trial_s=config.TRIAL_S):
    """Compare the first ``split_block`` characters with the rest.

    Args:
        results: One SessionResult or a cohort of them (same block count)
        split_block (int): Number of blocks in the first half

    Returns:
        HalvesReport: Per-half accuracy, bit rate and below-threshold character counts
    """
    results = _as_results(results)
    accuracy, rates = per_character(results, n_items, trial_s)
    n_blocks = len(accuracy)
    if not 0 < split_block < n_blocks:
        raise ValidationError(f"split block {split_block} must lie inside 1..{n_blocks - 1}")
    first = _half(results, range(split_block), accuracy, rates,
                  accuracy_threshold, bit_rate_threshold, n_items, trial_s)
    last = _half(results, range(split_block, n_blocks), accuracy, rates,
                 accuracy_threshold, bit_rate_threshold, n_items, trial_s)
    return HalvesReport(first, last, split_block)


# Correlations with order and visual angle

@dataclass(frozen=True)
class OrderCorrelation:
    accuracy: StatResult
    bit_rate: StatResult
    per_character_accuracy_pct: tuple
    per_character_bit_rate: tuple


def order_correlation(results, n_items=config.N_ITEMS, trial_s=config.TRIAL_S):
    """Pearson correlation of per-character performance with character order."""
    accuracy, rates = per_character(results, n_items, trial_s)
    order = np.arange(1, len(accuracy) + 1)
    accuracy_pct = [float(100 * a) for a in accuracy]
    return OrderCorrelation(
        accuracy=pearson(order, accuracy_pct),
        bit_rate=pearson(order, rates),
        per_character_accuracy_pct=tuple(accuracy_pct),
        per_character_bit_rate=tuple(rates),
    )


@dataclass(frozen=True)
class VisualAngleReport:
    angles_deg: tuple
    accuracy_pct: tuple
    bit_rate: tuple
    n_blocks: tuple
    accuracy_correlation: StatResult
    bit_rate_correlation: StatResult


def visual_angle_correlation(results, layout, n_items=config.N_ITEMS, trial_s=config.TRIAL_S):
    """Spearman correlation of accuracy and bit rate with target eccentricity.

    Blocks are pooled by their target's visual angle, rounded to 0.01 deg.
    """
    results = _as_results(results)
    angles = np.round(layout.visual_angles, 2)
    pooled = {}
    for result in results:
        for block in result.blocks:
            pooled.setdefault(float(angles[block.target]), []).append(block)

    keys = sorted(pooled)
    accuracy_pct, rates, counts = [], [], []
    for angle in keys:
        blocks = pooled[angle]
        hit = Fraction(sum(1 for b in blocks if b.predicted == b.target), len(blocks))
        accuracy_pct.append(float(100 * hit))
        rates.append(bit_rate(hit, n_items, sum(b.trials_used for b in blocks), trial_s, len(blocks)))
        counts.append(len(blocks))

    return VisualAngleReport(
        angles_deg=tuple(keys),
        accuracy_pct=tuple(accuracy_pct),
        bit_rate=tuple(rates),
        n_blocks=tuple(counts),
        accuracy_correlation=spearman(keys, accuracy_pct),
        bit_rate_correlation=spearman(keys, rates),
    )


# Paradigm comparison

@dataclass(frozen=True)
class ComparisonRow:
    variable: str
    ms_mean: float
    ms_sd: float
    ls_mean: float
    ls_sd: float
    test: StatResult
    ms_normality: StatResult
    ls_normality: StatResult


def _normality_or_none(x, lilliefors=False):
    try:
        return ks_normality(x, lilliefors=lilliefors)
    except ValidationError as e:
        logger.debug("Skipping normality check: %s", e)
        return None


def compare_samples(variable, ms_values, ls_values, lilliefors=False):
    ms_values, ls_values = np.asarray(ms_values, dtype=float), np.asarray(ls_values, dtype=float)
    return ComparisonRow(
        variable=variable,
        ms_mean=float(ms_values.mean()),
        ms_sd=float(ms_values.std(ddof=1)),
        ls_mean=float(ls_values.mean()),
        ls_sd=float(ls_values.std(ddof=1)),
        test=paired_t_test(ms_values, ls_values),
        ms_normality=_normality_or_none(ms_values, lilliefors),
        ls_normality=_normality_or_none(ls_values, lilliefors),
    )


def paradigm_comparison(ms_results, ls_results, lilliefors=False):
    """Paired tests of accuracy, trials and bit rate between the two paradigms.

    Args:
        ms_results (list): MS-P SessionResults, one per subject
        ls_results (list): LS-P SessionResults in the same subject order
        lilliefors (bool): Monte Carlo KS with estimated parameters

    Returns:
        list: ComparisonRow per variable
    """
    ms_results, ls_results = list(ms_results), list(ls_results)
    if len(ms_results) != len(ls_results):
        raise ValidationError(f"{len(ms_results)} MS-P results vs {len(ls_results)} LS-P results")
    rows = []
    for variable, getter in (
        ("feedback_accuracy_pct", feedback_accuracy),
        ("trials_for_42", lambda r: sum(b.trials_used for b in r.blocks)),
        ("bit_rate", result_bit_rate),
    ):
        rows.append(compare_samples(variable, [getter(r) for r in ms_results], [getter(r) for r in ls_results],
                                    lilliefors))
    return rows


# ERP averages

@dataclass(frozen=True)
class ErpAverages:
    time_ms: np.ndarray
    target: np.ndarray
    nontarget: np.ndarray

    @property
    def difference(self):
        return self.target - self.nontarget


def erp_averages(epochs, sample_rate_hz=config.SAMPLE_RATE_HZ):
    """Grand-average target, nontarget and difference waveforms per channel."""
    epochs = list(epochs)
    target = [e.data for e in epochs if e.is_target]
    nontarget = [e.data for e in epochs if not e.is_target]
    if not target or not nontarget:
        raise ValidationError("ERP averages need both target and nontarget epochs")
    n = target[0].shape[1]
    time_ms = (np.arange(n) - dsp.PRE_SAMPLES) * 1000.0 / sample_rate_hz
    return ErpAverages(time_ms, np.mean(target, axis=0), np.mean(nontarget, axis=0))


# Fatigue band power

@dataclass(frozen=True)
class HalfBandPower:
    theta_first: float
    theta_last: float
    alpha_first: float
    alpha_last: float


@dataclass(frozen=True)
class BandPowerReport:
    theta_fz_first: tuple
    theta_fz_last: tuple
    alpha_pz_first: tuple
    alpha_pz_last: tuple
    theta_test: StatResult
    alpha_test: StatResult

    @property
    def n_subjects(self):
        return len(self.alpha_pz_first)


def split_sample(recording, split_block, cue_s=config.FEEDBACK_S):
    """First sample of the cue that precedes block ``split_block`` (0-based ordinal)."""
    block_ids = sorted({e.block_index for e in recording.events})
    if len(block_ids) <= split_block:
        raise ValidationError(f"recording spans {len(block_ids)} blocks; cannot split at block {split_block}")
    first_onset = min(e.onset_sample for e in recording.events if e.block_index == block_ids[split_block])
    return max(first_onset - int(round(cue_s * recording.sample_rate_hz)), 0)


def band_power_halves(recording, split_block=config.ONLINE_BLOCKS // 2, cue_s=config.FEEDBACK_S,
                      theta_band=config.THETA_BAND_HZ, alpha_band=config.ALPHA_BAND_HZ):
    """Theta power at Fz and alpha power at Pz before and after the split block."""
    for name in (config.THETA_CHANNEL, config.ALPHA_CHANNEL):
        if name not in recording.channels:
            raise ValidationError(f"fatigue analysis needs channel {name}")
    split = split_sample(recording, split_block, cue_s)
    fs = recording.sample_rate_hz
    theta = recording.channel(config.THETA_CHANNEL)
    alpha = recording.channel(config.ALPHA_CHANNEL)
    return HalfBandPower(
        theta_first=dsp.band_power(theta[:split], fs, theta_band),
        theta_last=dsp.band_power(theta[split:], fs, theta_band),
        alpha_first=dsp.band_power(alpha[:split], fs, alpha_band),
        alpha_last=dsp.band_power(alpha[split:], fs, alpha_band),
    )


def fatigue_report(recordings, split_block=config.ONLINE_BLOCKS // 2, cue_s=config.FEEDBACK_S):
    """Cohort band-power contrast between session halves.

    Each test compares last-half with first-half power, so a positive t
    means power increased over the session.

    Args:
        recordings (list): One online ContinuousRecording per subject

    Returns:
        BandPowerReport: Per-subject powers and paired t-tests per band
    """
    halves = [band_power_halves(r, split_block, cue_s) for r in recordings]
    if len(halves) < 2:
        raise ValidationError("fatigue report needs at least 2 recordings")
    theta_first = tuple(h.theta_first for h in halves)
    theta_last = tuple(h.theta_last for h in halves)
    alpha_first = tuple(h.alpha_first for h in halves)
    alpha_last = tuple(h.alpha_last for h in halves)
    report = BandPowerReport(
        theta_fz_first=theta_first,
        theta_fz_last=theta_last,
        alpha_pz_first=alpha_first,
        alpha_pz_last=alpha_last,
        theta_test=paired_t_test(theta_last, theta_first),
        alpha_test=paired_t_test(alpha_last, alpha_first),
    )
    logger.info("Fatigue report over %d subjects: alpha t=%.3f p=%.4g, theta t=%.3f p=%.4g",
                len(halves), report.alpha_test.statistic, report.alpha_test.p_value,
                report.theta_test.statistic, report.theta_test.p_value)
    return report


# Reference table reconstruction

def load_table2(path=config.TABLE2_FILE):
    """Read the embedded reference rows (subject, paradigm, accuracy_pct, trials, bit_rate)."""
    table = pd.read_csv(path)
    expected = ["subject", "paradigm", "accuracy_pct", "trials", "bit_rate"]
    if list(table.columns) != expected:
        raise ValidationError(f"{path} columns {list(table.columns)} != {expected}")
    return table


def check_table2(table=None, tolerance=config.BIT_RATE_TOLERANCE):
    """Recompute every reference bit rate from its printed accuracy and trials.

    Returns:
        pandas.DataFrame: The table plus ``computed``, ``residual`` and ``within_tolerance``
    """
    table = load_table2() if table is None else table.copy()
    table["computed"] = [
        bit_rate(acc / 100.0, config.N_ITEMS, trials)
        for acc, trials in zip(table["accuracy_pct"], table["trials"])
    ]
    table["residual"] = table["computed"] - table["bit_rate"]
    table["within_tolerance"] = table["residual"].abs() <= tolerance
    logger.debug("Reference table check: %d/%d rows within %.2f bits/min",
                 int(table["within_tolerance"].sum()), len(table), tolerance)
    return table
