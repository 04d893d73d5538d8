"""
Synthetic EEG for a scheduled speller session.

A recording is the sum of three parts, each on the 16-channel montage:

* background: white Gaussian noise shaped by the one-pole filter
  ``y[n] = 0.95 * y[n-1] + x[n]`` (``scipy.signal.lfilter([1], [1, -0.95])``),
  independent per channel, mean removed and scaled to exactly
  ``noise_rms_uv`` RMS per channel;
* alpha: a 10 Hz sine with amplitude
  ``alpha_base_uv * (1 + alpha_drift_rate * t / T)`` on the posterior
  channels, ``t`` being session time and ``T`` the fatigue horizon;
* ERPs: every flash adds Gaussian bumps
  ``amplitude * exp(-(t - latency)^2 / (2 * (width / 2.355)^2))`` per
  component, scaled by the channel gain, by 1 (target flash) or
  ``nontarget_gain``, by a per-flash factor drawn from N(1, jitter^2)
  (clipped at 0) and by ``max(0, 1 - erp_decline_rate * t / T)``.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from erpspeller.core import config
from erpspeller.core.errors import ValidationError

logger = logging.getLogger(__name__)

FWHM_TO_SIGMA = 2.355

N200_GAIN = {
    "F3": 0.1, "Fz": 0.1, "F4": 0.1, "FC1": 0.2, "FC2": 0.2,
    "C3": 0.3, "Cz": 0.3, "C4": 0.3,
    "P7": 0.9, "P3": 0.7, "Pz": 0.7, "P4": 0.7, "P8": 0.9,
    "O1": 1.0, "Oz": 1.0, "O2": 1.0,
}
P300_GAIN = {
    "F3": 0.5, "Fz": 0.6, "F4": 0.5, "FC1": 0.7, "FC2": 0.7,
    "C3": 0.8, "Cz": 1.0, "C4": 0.8,
    "P7": 0.6, "P3": 0.85, "Pz": 1.0, "P4": 0.85, "P8": 0.6,
    "O1": 0.5, "Oz": 0.6, "O2": 0.5,
}
N400_GAIN = {
    "F3": 0.9, "Fz": 1.0, "F4": 0.9, "FC1": 1.0, "FC2": 1.0,
    "C3": 0.7, "Cz": 0.8, "C4": 0.7,
    "P7": 0.2, "P3": 0.4, "Pz": 0.5, "P4": 0.4, "P8": 0.2,
    "O1": 0.2, "Oz": 0.2, "O2": 0.2,
}
ALPHA_GAIN = {
    "P7": 0.8, "P3": 1.0, "Pz": 1.0, "P4": 1.0, "P8": 0.8,
    "O1": 1.0, "Oz": 1.0, "O2": 1.0,
}

COMPONENT_SIGNS = {"N200": -1, "P300": 1, "N400": -1}


@dataclass(frozen=True)
class ErpComponent:
    name: str
    latency_ms: float
    width_ms: float
    amplitude_uv: float
    channel_gain: dict = field(hash=False)

    def __post_init__(self):
        if self.name not in COMPONENT_SIGNS:
            raise ValidationError(f"unknown ERP component {self.name!r}")
        if not self.width_ms > 0:
            raise ValidationError(f"{self.name} width_ms must be positive, got {self.width_ms}")
        if self.amplitude_uv * COMPONENT_SIGNS[self.name] < 0:
            raise ValidationError(f"{self.name} amplitude has the wrong polarity: {self.amplitude_uv}")
        unknown = set(self.channel_gain) - set(config.CHANNELS)
        if unknown:
            raise ValidationError(f"{self.name} gain names unknown channels: {sorted(unknown)}")
        for channel, gain in self.channel_gain.items():
            if not 0.0 <= gain <= 1.0:
                raise ValidationError(f"{self.name} gain for {channel} must lie in [0, 1], got {gain}")

    def gain_vector(self):
        return np.array([self.channel_gain.get(ch, 0.0) for ch in config.CHANNELS])

    def waveform(self, t_ms):
        """Single-flash bump of this component at times t_ms after onset."""
        sigma = self.width_ms / FWHM_TO_SIGMA
        return self.amplitude_uv * np.exp(-(t_ms - self.latency_ms) ** 2 / (2 * sigma ** 2))

    def to_dict(self):
        return {
            "name": self.name,
            "latency_ms": self.latency_ms,
            "width_ms": self.width_ms,
            "amplitude_uv": self.amplitude_uv,
            "channel_gain": dict(self.channel_gain),
        }


def default_components():
    return (
        ErpComponent("N200", 200.0, 80.0, -3.0, dict(N200_GAIN)),
        ErpComponent("P300", 350.0, 150.0, 6.0, dict(P300_GAIN)),
        ErpComponent("N400", 450.0, 120.0, -3.0, dict(N400_GAIN)),
    )


@dataclass(frozen=True)
class SubjectProfile:
    erp_components: tuple = field(default_factory=default_components)
    nontarget_gain: float = 0.1
    noise_rms_uv: float = 5.0
    alpha_base_uv: float = 2.0
    alpha_drift_rate: float = 0.3
    amplitude_jitter: float = 0.5
    erp_decline_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "erp_components", tuple(self.erp_components))
        if not 0.0 <= self.nontarget_gain < 1.0:
            raise ValidationError(f"nontarget_gain must lie in [0, 1), got {self.nontarget_gain}")
        for name in ("noise_rms_uv", "alpha_base_uv", "amplitude_jitter", "erp_decline_rate"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValidationError(f"seed must be non-negative, got {self.seed}")

    def component(self, name):
        for component in self.erp_components:
            if component.name == name:
                return component
        return None

    def scaled(self, factor):
        """Copy with every ERP amplitude multiplied by factor."""
        components = tuple(replace(c, amplitude_uv=c.amplitude_uv * factor) for c in self.erp_components)
        return replace(self, erp_components=components)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        return {
            "erp_components": [c.to_dict() for c in self.erp_components],
            "nontarget_gain": self.nontarget_gain,
            "noise_rms_uv": self.noise_rms_uv,
            "alpha_base_uv": self.alpha_base_uv,
            "alpha_drift_rate": self.alpha_drift_rate,
            "amplitude_jitter": self.amplitude_jitter,
            "erp_decline_rate": self.erp_decline_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "erp_components" in data:
            data["erp_components"] = tuple(ErpComponent(**c) for c in data["erp_components"])
        return cls(**data)


@dataclass
class ContinuousRecording:
    data: np.ndarray
    events: tuple
    block_targets: tuple
    sample_rate_hz: int = config.SAMPLE_RATE_HZ
    channels: tuple = tuple(config.CHANNELS)

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != len(config.CHANNELS):
            raise ValidationError(f"recording needs {len(config.CHANNELS)} channel rows, got shape {self.data.shape}")
        if self.sample_rate_hz != config.SAMPLE_RATE_HZ:
            raise ValidationError(f"sample rate is fixed at {config.SAMPLE_RATE_HZ} Hz, got {self.sample_rate_hz}")
        self.events = tuple(self.events)
        self.block_targets = tuple(self.block_targets)
        self.channels = tuple(self.channels)

    @property
    def n_samples(self):
        return self.data.shape[1]

    @property
    def duration_s(self):
        return self.n_samples / self.sample_rate_hz

    def channel(self, name):
        if name not in self.channels:
            raise ValidationError(f"recording has no channel {name!r}")
        return self.data[self.channels.index(name)]


def subject_rng(seed, stream=()):
    """Independent random stream for one subject and pipeline stage."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]))


def pink_noise(rng, n_channels, n_samples, rms_uv, pole=config.PINK_POLE):
    """Channel-independent 1/f-like noise with an exact per-channel RMS."""
    white = rng.standard_normal((n_channels, n_samples))
    if rms_uv == 0:
        return np.zeros((n_channels, n_samples))
    shaped = signal.lfilter([1.0], [1.0, -pole], white, axis=1)
    shaped -= shaped.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.mean(shaped ** 2, axis=1, keepdims=True))
    return shaped * (rms_uv / rms)


def erp_kernel(component, sample_rate_hz=config.SAMPLE_RATE_HZ):
    """Component waveform sampled from flash onset over ERP_KERNEL_S."""
    n = int(round(config.ERP_KERNEL_S * sample_rate_hz))
    t_ms = np.arange(n) * 1000.0 / sample_rate_hz
    return component.waveform(t_ms)


def _validate_schedule(schedule):
    if not schedule.events:
        raise ValidationError("schedule has no flash events")
    onsets = np.array([event.onset_sample for event in schedule.events])
    if np.any(np.diff(onsets) <= 0):
        raise ValidationError("schedule onsets must be strictly increasing")
    post = int(round(config.EPOCH_POST_MS * config.SAMPLE_RATE_HZ / 1000.0))
    if onsets[0] < 0 or onsets[-1] + post > schedule.n_samples:
        raise ValidationError(
            f"schedule overruns the recording: last window ends at {onsets[-1] + post}, "
            f"capacity {schedule.n_samples}")


def synthesize_recording(profile, schedule, flash_code, *, stream=(), clock_offset_s=0.0, horizon_s=None):
    """Generate the EEG a profile produces while watching a schedule.

    Every flash carries the component templates scaled by a per-flash factor
    drawn with ``profile.amplitude_jitter`` and by the fatigue decline
    ``profile.erp_decline_rate``. The profile defaults (0.5 and 0.2) vary the
    evoked response from flash to flash; set both to 0 to get the exact
    templates on every flash.

    Args:
        profile (SubjectProfile): Subject model
        schedule (StimulusSchedule): Flash events, block targets and capacity
        flash_code (FlashCode): Used to check each event's target flag
        stream (tuple): Extra integers mixed into the seed, one per pipeline stage
        clock_offset_s (float): Session time at sample 0
        horizon_s (float): Fatigue horizon T; defaults to the recording length

    Returns:
        ContinuousRecording: Raw float64 scalp potentials in microvolts
    """
    _validate_schedule(schedule)
    for event in schedule.events:
        target = schedule.block_targets[event.block_index - schedule.events[0].block_index]
        if event.is_target != (event.group_id in flash_code.groups_of(target)):
            raise ValidationError(f"event at sample {event.onset_sample} has an inconsistent target flag")

    fs = config.SAMPLE_RATE_HZ
    n_samples = schedule.n_samples
    n_channels = len(config.CHANNELS)
    horizon = horizon_s if horizon_s else n_samples / fs
    rng = subject_rng(profile.seed, stream)

    data = pink_noise(rng, n_channels, n_samples, profile.noise_rms_uv)

    phase = rng.uniform(0.0, 2 * math.pi)
    t = clock_offset_s + np.arange(n_samples) / fs
    if profile.alpha_base_uv > 0:
        envelope = profile.alpha_base_uv * (1.0 + profile.alpha_drift_rate * t / horizon)
        alpha = envelope * np.sin(2 * math.pi * config.ALPHA_FREQ_HZ * t + phase)
        gains = np.array([ALPHA_GAIN.get(ch, 0.0) for ch in config.CHANNELS])
        data += gains[:, None] * alpha[None, :]

    onsets = np.array([event.onset_sample for event in schedule.events])
    jitter = np.clip(rng.normal(1.0, profile.amplitude_jitter, size=len(onsets)), 0.0, None)
    decline = np.clip(1.0 - profile.erp_decline_rate * (clock_offset_s + onsets / fs) / horizon, 0.0, None)
    is_target = np.array([event.is_target for event in schedule.events])
    weights = np.where(is_target, 1.0, profile.nontarget_gain) * jitter * decline

    impulses = np.zeros(n_samples)
    np.add.at(impulses, onsets, weights)
    for component in profile.erp_components:
        if component.amplitude_uv == 0:
            continue
        response = np.convolve(impulses, erp_kernel(component, fs))[:n_samples]
        data += component.gain_vector()[:, None] * response[None, :]

    logger.debug("Synthesized %d samples (%d flashes) for seed %d stream %s",
                 n_samples, len(onsets), profile.seed, tuple(stream))
    return ContinuousRecording(data, schedule.events, schedule.block_targets)


def target_snr(profile):
    """P300 peak amplitude over background RMS.

    Returns:
        float: ``math.inf`` when the background is silent and the P300 is not
    """
    p300 = profile.component("P300")
    peak = 0.0 if p300 is None else abs(p300.amplitude_uv) * max(p300.channel_gain.values(), default=0.0)
    if peak == 0:
        return 0.0
    if profile.noise_rms_uv == 0:
        return math.inf
    return peak / profile.noise_rms_uv
