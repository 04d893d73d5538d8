"""
Character decoding and the dynamic stopping policy.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from erpspeller.core import config
from erpspeller.core.errors import ValidationError

logger = logging.getLogger(__name__)


class BlockStatus(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass(frozen=True)
class BlockDecision:
    status: BlockStatus
    predicted_item: int
    trials_used: int


@dataclass
class StoppingState:
    """Single-owner accumulator for one trial block."""

    flash_code: object
    max_trials: int = config.MAX_TRIALS
    min_trials: int = config.MIN_TRIALS
    cumulative_group_scores: np.ndarray = None
    trials_seen: int = 0
    prediction_history: list = field(default_factory=list)
    stopped: bool = False

    def __post_init__(self):
        if not 1 <= self.min_trials <= self.max_trials:
            raise ValidationError(f"need 1 <= min_trials ({self.min_trials}) <= max_trials ({self.max_trials})")
        if self.cumulative_group_scores is None:
            self.cumulative_group_scores = np.zeros(self.flash_code.n_groups)


def group_scores(flash_scores, group_ids, n_groups=config.N_GROUPS):
    """Sum per-flash classifier scores into one score per group."""
    totals = np.zeros(n_groups)
    np.add.at(totals, np.asarray(group_ids, dtype=int), np.asarray(flash_scores, dtype=float))
    return totals


def predict_character(cumulative_group_scores, flash_code):
    """Item whose two groups have the largest summed score.

    Ties resolve to the lowest item index.
    """
    scores = np.asarray(cumulative_group_scores, dtype=float)
    if scores.shape != (flash_code.n_groups,) or not np.all(np.isfinite(scores)):
        raise ValidationError(f"expected {flash_code.n_groups} finite group scores, got {scores}")
    pair_sums = flash_code.membership @ scores
    return int(np.argmax(pair_sums))


def accumulate_trial(state, trial_scores):
    """Add one completed trial's group scores and record the new prediction.

    Args:
        state (StoppingState): Block state, modified in place
        trial_scores: 12 scores indexed by group, or a mapping group -> score

    Returns:
        StoppingState: The same state
    """
    if state.stopped:
        raise ValidationError("block already stopped; start a new StoppingState")
    if state.trials_seen >= state.max_trials:
        raise ValidationError(f"block already holds the maximum of {state.max_trials} trials")
    if isinstance(trial_scores, dict):
        if set(trial_scores) != set(range(state.flash_code.n_groups)):
            raise ValidationError("trial scores must cover every group exactly once")
        trial_scores = [trial_scores[g] for g in range(state.flash_code.n_groups)]
    trial_scores = np.asarray(trial_scores, dtype=float)
    if trial_scores.shape != state.cumulative_group_scores.shape:
        raise ValidationError(f"expected {state.flash_code.n_groups} trial scores, got {trial_scores.shape}")

    state.cumulative_group_scores = state.cumulative_group_scores + trial_scores
    state.trials_seen += 1
    state.prediction_history.append(predict_character(state.cumulative_group_scores, state.flash_code))
    return state


def stopping_step(state):
    """Stop once two consecutive predictions agree, or at the trial cap."""
    if state.trials_seen == 0:
        raise ValidationError("stopping_step needs at least one completed trial")
    history = state.prediction_history
    agreed = state.trials_seen >= max(state.min_trials, 2) and history[-1] == history[-2]
    if agreed or state.trials_seen >= state.max_trials:
        state.stopped = True
        return BlockDecision(BlockStatus.STOP, history[-1], state.trials_seen)
    return BlockDecision(BlockStatus.CONTINUE, history[-1], state.trials_seen)


def decode_block(flash_scores, events, flash_code, max_trials=config.MAX_TRIALS, min_trials=config.MIN_TRIALS):
    """Run the stopping policy over the scored flashes of one block.

    Args:
        flash_scores (numpy.ndarray): One classifier score per event
        events (list): The block's FlashEvent objects, in onset order
        flash_code (FlashCode): Flash code

    Returns:
        BlockDecision: Always a STOP decision
    """
    state = StoppingState(flash_code, max_trials=max_trials, min_trials=min_trials)
    trial_index = np.array([e.trial_index for e in events])
    groups = np.array([e.group_id for e in events])
    flash_scores = np.asarray(flash_scores, dtype=float)
    available = int(trial_index.max()) + 1 if len(events) else 0

    decision = None
    for trial in range(min(available, max_trials)):
        mask = trial_index == trial
        accumulate_trial(state, group_scores(flash_scores[mask], groups[mask], flash_code.n_groups))
        decision = stopping_step(state)
        if decision.status is BlockStatus.STOP:
            return decision

    if decision is None:
        raise ValidationError("block has no flashes to decode")
    # Recording ran out of trials before the policy stopped
    state.stopped = True
    return BlockDecision(BlockStatus.STOP, decision.predicted_item, decision.trials_used)
