"""Builders shared by the test modules."""

from erpspeller.core.session import BlockRecord, SessionResult


def make_result(outcomes, paradigm_id="MS_P", seed=0):
    """SessionResult from (target, predicted, trials_used) tuples."""
    blocks = tuple(BlockRecord(t, p, n, 0.0) for t, p, n in outcomes)
    return SessionResult(blocks, paradigm_id, seed)


def fixed_result(n_correct, n_blocks=42, trials_per_block=2, paradigm_id="MS_P"):
    outcomes = [(i % 42, i % 42 if i < n_correct else (i + 1) % 42, trials_per_block) for i in range(n_blocks)]
    return make_result(outcomes, paradigm_id)
