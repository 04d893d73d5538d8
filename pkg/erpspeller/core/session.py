"""
Offline calibration and online copy-spelling protocols.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from erpspeller.core import config
from erpspeller.core import analysis, blda, decoder, dsp
from erpspeller.core.errors import ValidationError
from erpspeller.core.paradigm import PARADIGM_IDS, build_flash_code, build_schedule, block_span
from erpspeller.core.synth import ContinuousRecording, subject_rng, synthesize_recording

logger = logging.getLogger(__name__)

# Seed stream tags, mixed into SeedSequence alongside the subject seed
STREAM_OFFLINE = 1
STREAM_ONLINE = 2
STREAM_HELDOUT = 3
STREAM_SCHEDULE = 4
STREAM_COHORT = 5
PARADIGM_STREAM = {"MS_P": 0, "LS_P": 1}


def default_copy_targets(n_blocks=config.ONLINE_BLOCKS, n_items=config.N_ITEMS, seed=config.COPY_TARGET_SEED):
    """Fixed pseudo-random copy text; a full permutation of the items when n_blocks == n_items."""
    rng = np.random.default_rng(seed)
    reps = -(-n_blocks // n_items)
    return tuple(int(i) for i in np.concatenate([rng.permutation(n_items) for _ in range(reps)])[:n_blocks])


@dataclass(frozen=True)
class OfflineProtocol:
    runs: int = config.OFFLINE_RUNS
    blocks_per_run: int = config.OFFLINE_BLOCKS_PER_RUN
    trials_per_block: int = config.OFFLINE_TRIALS_PER_BLOCK
    inter_run_break_s: float = config.INTER_RUN_BREAK_S


@dataclass(frozen=True)
class OnlineProtocol:
    blocks: int = config.ONLINE_BLOCKS
    feedback_s: float = config.FEEDBACK_S
    min_trials: int = config.MIN_TRIALS
    max_trials: int = config.MAX_TRIALS
    fatigue_horizon_s: float = config.FATIGUE_HORIZON_S


@dataclass(frozen=True)
class ProtocolConfig:
    paradigm_id: str = "MS_P"
    soa_ms: float = config.SOA_MS
    offline: OfflineProtocol = field(default_factory=OfflineProtocol)
    online: OnlineProtocol = field(default_factory=OnlineProtocol)
    copy_targets: tuple = None
    segment_tail_s: float = config.SEGMENT_TAIL_S

    def __post_init__(self):
        if self.paradigm_id not in PARADIGM_IDS:
            raise ValidationError(f"paradigm_id must be one of {PARADIGM_IDS}, got {self.paradigm_id!r}")
        if self.soa_ms != config.SOA_MS:
            raise ValidationError(f"SOA is fixed at {config.SOA_MS} ms by the 256 Hz schedule")
        if self.copy_targets is None:
            object.__setattr__(self, "copy_targets", default_copy_targets(self.online.blocks))
        object.__setattr__(self, "copy_targets", tuple(int(t) for t in self.copy_targets))
        if len(self.copy_targets) != self.online.blocks:
            raise ValidationError(
                f"{len(self.copy_targets)} copy targets for {self.online.blocks} online blocks")
        if any(not 0 <= t < config.N_ITEMS for t in self.copy_targets):
            raise ValidationError("copy targets must be item indices 0..41")
        if not 2 <= self.online.min_trials <= self.online.max_trials:
            raise ValidationError(
                f"need 2 <= min_trials ({self.online.min_trials}) <= max_trials ({self.online.max_trials})")
        for name in ("runs", "blocks_per_run", "trials_per_block"):
            if getattr(self.offline, name) < 1:
                raise ValidationError(f"offline.{name} must be at least 1")

    @property
    def trial_s(self):
        return config.N_GROUPS * self.soa_ms / 1000.0

    def with_paradigm(self, paradigm_id):
        return replace(self, paradigm_id=paradigm_id)

    def to_dict(self):
        data = asdict(self)
        data["copy_targets"] = list(self.copy_targets)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["offline"] = OfflineProtocol(**data.get("offline", {}))
        data["online"] = OnlineProtocol(**data.get("online", {}))
        return cls(**data)


@dataclass(frozen=True)
class BlockRecord:
    target: int
    predicted: int
    trials_used: int
    start_time_s: float


@dataclass
class SessionResult:
    blocks: tuple
    paradigm_id: str
    seed: int
    feedback_s: float = config.FEEDBACK_S
    trial_s: float = config.TRIAL_S
    recording: ContinuousRecording = field(default=None, repr=False, compare=False)

    @property
    def accuracy(self):
        return analysis.accuracy_fraction(self)

    @property
    def accuracy_pct(self):
        return analysis.feedback_accuracy(self)

    @property
    def trials_total(self):
        return sum(b.trials_used for b in self.blocks)

    @property
    def bit_rate(self):
        return analysis.result_bit_rate(self, trial_s=self.trial_s)

    def to_dict(self):
        return {
            "paradigm_id": self.paradigm_id,
            "seed": self.seed,
            "feedback_accuracy_pct": round(self.accuracy_pct, 1),
            "correct": sum(1 for b in self.blocks if b.predicted == b.target),
            "n_blocks": len(self.blocks),
            "trials_total": self.trials_total,
            "bit_rate": round(self.bit_rate, 1),
            "blocks": [asdict(b) for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, data, recording=None):
        try:
            blocks = tuple(BlockRecord(**b) for b in data["blocks"])
            return cls(blocks, data["paradigm_id"], int(data["seed"]), recording=recording)
        except (KeyError, TypeError) as e:
            raise ValidationError(f"session result document is malformed: {e}") from None


@dataclass(frozen=True)
class SessionTimeline:
    block_s: tuple
    flashing_s: float
    feedback_s: float

    @property
    def total_s(self):
        return self.flashing_s + self.feedback_s


def session_timeline(result, protocol=None):
    """Wall-clock ledger: 4 s of feedback plus trials x 2.4 s per block."""
    feedback_s = protocol.online.feedback_s if protocol else result.feedback_s
    trial_s = protocol.trial_s if protocol else result.trial_s
    block_s = tuple(b.trials_used * trial_s + feedback_s for b in result.blocks)
    return SessionTimeline(
        block_s=block_s,
        flashing_s=result.trials_total * trial_s,
        feedback_s=len(result.blocks) * feedback_s,
    )


@dataclass
class OfflineResult:
    features: np.ndarray
    labels: np.ndarray
    model: blda.BldaModel
    recordings: list = field(default_factory=list, repr=False)

    @property
    def n_epochs(self):
        return len(self.labels)

    @property
    def n_targets(self):
        return int(np.sum(self.labels > 0))


def _schedule_rng(profile, protocol, stage, index):
    return subject_rng(profile.seed, (STREAM_SCHEDULE, PARADIGM_STREAM[protocol.paradigm_id], stage, index))


def _offline_targets(profile, protocol, run, stream_tag):
    rng = subject_rng(profile.seed, (stream_tag, PARADIGM_STREAM[protocol.paradigm_id], 1000 + run))
    return [int(t) for t in rng.choice(config.N_ITEMS, protocol.offline.blocks_per_run, replace=False)]


def offline_run_recording(profile, protocol, run, flash_code, stream_tag=STREAM_OFFLINE):
    """Synthesize and acquire one offline run of full-length blocks.

    Every run starts fresh on the fatigue clock after the inter-run break.
    """
    targets = _offline_targets(profile, protocol, run, stream_tag)
    schedule = build_schedule(flash_code, targets, protocol.offline.trials_per_block,
                              _schedule_rng(profile, protocol, stream_tag, run),
                              cue_s=protocol.online.feedback_s, tail_s=protocol.segment_tail_s,
                              first_block=run * protocol.offline.blocks_per_run)
    raw = synthesize_recording(profile, schedule, flash_code,
                               stream=(stream_tag, PARADIGM_STREAM[protocol.paradigm_id], run),
                               horizon_s=protocol.online.fatigue_horizon_s)
    return dsp.acquire(raw)


def recording_features(recording, coeffs=None):
    """Analysis-filter a recording and return its design matrix and labels."""
    filtered = dsp.analysis_filter(recording.data, coeffs)
    return dsp.feature_matrix(filtered, recording.events)


def run_offline(profile, protocol, **train_options):
    """Calibration: offline runs of 5 blocks x 16 trials, then BLDA training.

    Args:
        profile (SubjectProfile): Subject model
        protocol (ProtocolConfig): Protocol settings
        **train_options: Passed to ``blda.train``

    Returns:
        OfflineResult: Training matrix, labels, model and the acquired recordings
    """
    flash_code = build_flash_code()
    coeffs = dsp.design_bandpass()
    recordings, X_parts, y_parts = [], [], []
    for run in range(protocol.offline.runs):
        recording = offline_run_recording(profile, protocol, run, flash_code)
        X, y = recording_features(recording, coeffs)
        recordings.append(recording)
        X_parts.append(X)
        y_parts.append(y)
    X, y = np.vstack(X_parts), np.concatenate(y_parts)
    logger.info("Offline %s seed %d: %d epochs (%d targets)",
                protocol.paradigm_id, profile.seed, len(y), int(np.sum(y > 0)))
    model = blda.train(X, y, **train_options)
    return OfflineResult(X, y, model, recordings)


@dataclass(frozen=True)
class OfflineEvaluation:
    accuracy_by_trials: tuple
    auc: float
    mean_target_score: float
    mean_nontarget_score: float


def evaluate_offline(model, profile, protocol):
    """Score a held-out offline run: accuracy per averaged trials and single-flash AUC."""
    flash_code = build_flash_code()
    recording = offline_run_recording(profile, protocol, 0, flash_code, stream_tag=STREAM_HELDOUT)
    X, y = recording_features(recording)
    scores = blda.score(model, X)
    curve = analysis.accuracy_by_trials(scores, recording.events, recording.block_targets, flash_code,
                                        protocol.offline.trials_per_block)
    return OfflineEvaluation(
        accuracy_by_trials=tuple(float(a) for a in curve),
        auc=analysis.single_flash_auc(scores, y),
        mean_target_score=float(scores[y > 0].mean()),
        mean_nontarget_score=float(scores[y < 0].mean()),
    )


def _decode(model, recording, events, flash_code, protocol, coeffs):
    filtered = dsp.analysis_filter(recording.data, coeffs)
    X, _ = dsp.feature_matrix(filtered, events)
    return decoder.decode_block(blda.score(model, X), events, flash_code,
                                protocol.online.max_trials, protocol.online.min_trials)


def run_online(model, profile, protocol, *, clock_offset_s=0.0):
    """Copy-spell the protocol's targets with dynamic stopping.

    Each block is synthesized as a segment of cue, ``max_trials`` trials and
    a short tail starting at the current session time, then acquired,
    filtered and decoded trial by trial. Only the part up to the stopping
    trial is kept; the kept parts form the session recording.

    Args:
        model (BldaModel): Frozen classifier from the offline runs
        profile (SubjectProfile): Subject model
        protocol (ProtocolConfig): Protocol settings
        clock_offset_s (float): Session time at the first cue, for fatigue
            carried over from an earlier session

    Returns:
        SessionResult: Per-block outcomes with the concatenated recording attached
    """
    flash_code = build_flash_code()
    coeffs = dsp.design_bandpass()
    online = protocol.online
    fs = config.SAMPLE_RATE_HZ
    cue = int(round(online.feedback_s * fs))
    tail = int(round(protocol.segment_tail_s * fs))
    stream = PARADIGM_STREAM[protocol.paradigm_id]

    clock = clock_offset_s
    cursor = 0
    kept_data, kept_events, blocks = [], [], []
    for index, target in enumerate(protocol.copy_targets):
        schedule = build_schedule(flash_code, [target], online.max_trials,
                                  _schedule_rng(profile, protocol, STREAM_ONLINE, index),
                                  cue_s=online.feedback_s, tail_s=protocol.segment_tail_s, first_block=index)
        raw = synthesize_recording(profile, schedule, flash_code, stream=(STREAM_ONLINE, stream, index),
                                   clock_offset_s=clock, horizon_s=online.fatigue_horizon_s)
        segment = dsp.acquire(raw)
        decision = _decode(model, segment, segment.events, flash_code, protocol, coeffs)
        trials = decision.trials_used

        keep = cue + block_span(trials)
        if index == len(protocol.copy_targets) - 1:
            keep += tail
        kept_data.append(segment.data[:, :keep])
        kept_events.extend(replace(e, onset_sample=e.onset_sample + cursor)
                           for e in segment.events if e.trial_index < trials)
        blocks.append(BlockRecord(int(target), decision.predicted_item, trials, round(clock, 6)))
        logger.debug("Block %d: target %d predicted %d after %d trials", index, target,
                     decision.predicted_item, trials)

        cursor += keep
        clock += online.feedback_s + trials * protocol.trial_s

    recording = ContinuousRecording(np.hstack(kept_data), tuple(kept_events), protocol.copy_targets)
    result = SessionResult(tuple(blocks), protocol.paradigm_id, profile.seed,
                           online.feedback_s, protocol.trial_s, recording)
    logger.info("Online %s seed %d: %.1f%% in %d trials, %.1f bits/min",
                protocol.paradigm_id, profile.seed, result.accuracy_pct, result.trials_total, result.bit_rate)
    return result


def replay_schedule(profile, protocol):
    """Full-length online schedule (every block runs max_trials) for stored recordings."""
    flash_code = build_flash_code()
    rng = _schedule_rng(profile, protocol, STREAM_ONLINE, 10_000)
    return build_schedule(flash_code, protocol.copy_targets, protocol.online.max_trials, rng,
                          cue_s=protocol.online.feedback_s, tail_s=protocol.segment_tail_s)


def synthesize_online_recording(profile, protocol):
    """Acquired recording of a whole online run without early stopping."""
    flash_code = build_flash_code()
    schedule = replay_schedule(profile, protocol)
    raw = synthesize_recording(profile, schedule, flash_code,
                               stream=(STREAM_ONLINE, PARADIGM_STREAM[protocol.paradigm_id], 10_000),
                               horizon_s=schedule.n_samples / config.SAMPLE_RATE_HZ)
    return dsp.acquire(raw)


def replay_online(model, recording, protocol, seed=0):
    """Apply the stopping policy to a stored recording block by block.

    Args:
        model (BldaModel): Trained model
        recording (ContinuousRecording): Acquired recording with up to
            ``max_trials`` trials per block
        protocol (ProtocolConfig): Supplies the stopping limits and timing

    Returns:
        SessionResult: One record per block in the recording
    """
    flash_code = build_flash_code()
    filtered = dsp.analysis_filter(recording.data)
    X, _ = dsp.feature_matrix(filtered, recording.events)
    scores = blda.score(model, X)

    block_index = np.array([e.block_index for e in recording.events])
    block_ids = list(dict.fromkeys(int(b) for b in block_index))
    if len(block_ids) != len(recording.block_targets):
        raise ValidationError(
            f"recording has events for {len(block_ids)} blocks but {len(recording.block_targets)} targets")

    clock = 0.0
    blocks = []
    for offset, block in enumerate(block_ids):
        mask = block_index == block
        events = [e for e, m in zip(recording.events, mask) if m]
        decision = decoder.decode_block(scores[mask], events, flash_code,
                                        protocol.online.max_trials, protocol.online.min_trials)
        blocks.append(BlockRecord(int(recording.block_targets[offset]), decision.predicted_item,
                                  decision.trials_used, round(clock, 6)))
        clock += protocol.online.feedback_s + decision.trials_used * protocol.trial_s
    return SessionResult(tuple(blocks), protocol.paradigm_id, seed, protocol.online.feedback_s, protocol.trial_s)


@dataclass
class SubjectResult:
    subject: int
    seed: int
    order: tuple
    amplitude_scale: float
    sessions: dict
    evaluations: dict = field(default_factory=dict)


@dataclass
class CohortResult:
    subjects: list

    def results(self, paradigm_id):
        return [s.sessions[paradigm_id] for s in self.subjects]

    def recordings(self, paradigm_id):
        return [s.sessions[paradigm_id].recording for s in self.subjects]


def subject_profile(base_profile, seed, amplitude_spread):
    """Per-subject profile: base model, own seed, lognormal ERP amplitude scale."""
    rng = subject_rng(seed, (STREAM_COHORT,))
    scale = float(rng.lognormal(0.0, amplitude_spread)) if amplitude_spread > 0 else 1.0
    return base_profile.with_seed(seed).scaled(scale), scale


def run_subject(subject, seed, base_profile, protocol, amplitude_spread=0.2, counterbalance=True,
                evaluate=False, train_options=None):
    """Both paradigms for one subject; the second session continues the fatigue clock."""
    profile, scale = subject_profile(base_profile, seed, amplitude_spread)
    order = PARADIGM_IDS if (not counterbalance or subject % 2 == 0) else tuple(reversed(PARADIGM_IDS))

    sessions, evaluations = {}, {}
    clock = 0.0
    for paradigm_id in order:
        paradigm_protocol = protocol.with_paradigm(paradigm_id)
        offline = run_offline(profile, paradigm_protocol, **(train_options or {}))
        if evaluate:
            evaluations[paradigm_id] = evaluate_offline(offline.model, profile, paradigm_protocol)
        result = run_online(offline.model, profile, paradigm_protocol, clock_offset_s=clock)
        clock += session_timeline(result).total_s
        sessions[paradigm_id] = result
    return SubjectResult(subject, int(seed), order, scale, sessions, evaluations)


def run_cohort(seeds, base_profile, protocol, *, workers=1, amplitude_spread=0.2, counterbalance=True,
               evaluate=False, train_options=None):
    """Run every subject through both paradigms.

    Args:
        seeds (list): One seed per subject
        base_profile (SubjectProfile): Profile every subject derives from
        protocol (ProtocolConfig): Protocol settings (paradigm set per session)
        workers (int): Thread pool size
        amplitude_spread (float): Sigma of the lognormal ERP amplitude scale
        counterbalance (bool): Odd subjects run LS-P first

    Returns:
        CohortResult: Subjects in seed order
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValidationError("cohort needs at least one seed")

    def job(args):
        subject, seed = args
        return run_subject(subject, seed, base_profile, protocol, amplitude_spread, counterbalance,
                           evaluate, train_options)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            subjects = list(executor.map(job, enumerate(seeds)))
    else:
        subjects = [job(item) for item in enumerate(seeds)]
    logger.info("Cohort of %d subjects done", len(subjects))
    return CohortResult(subjects)
