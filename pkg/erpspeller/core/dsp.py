"""
Signal conditioning and feature extraction.

Two filter chains exist: the recorder's acquisition chain (0.5-30 Hz
Butterworth plus a 50 Hz notch, stored as float32) and the analysis chain
(1-30 Hz Butterworth, order 3) applied before epoching. Both filter causally
from a zero initial state.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from erpspeller.core import config
from erpspeller.core.errors import ValidationError

logger = logging.getLogger(__name__)

PRE_SAMPLES = int(round(config.EPOCH_PRE_MS * config.SAMPLE_RATE_HZ / 1000.0))    # 26
POST_SAMPLES = int(round(config.EPOCH_POST_MS * config.SAMPLE_RATE_HZ / 1000.0))  # 205
EPOCH_SAMPLES = PRE_SAMPLES + POST_SAMPLES
DECIMATION_INDEX = np.arange(0, POST_SAMPLES - 1, config.DECIMATION_STEP)      # 0, 7, ..., 203
N_FEATURES = len(config.CHANNELS) * len(DECIMATION_INDEX)


@dataclass(frozen=True)
class FilterCoefficients:
    numerator: np.ndarray
    denominator: np.ndarray
    order: int
    band_lo_hz: float
    band_hi_hz: float
    sample_rate_hz: float
    kind: str = "bandpass"
    sos: np.ndarray = None

    def sections(self):
        """Second-order sections, derived from the transfer function when none were designed."""
        if self.sos is not None:
            return self.sos
        return signal.tf2sos(self.numerator, self.denominator)

    def poles(self):
        return np.roots(self.denominator)

    def is_stable(self):
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def frequency_response(self, freqs_hz):
        """Complex response at the given frequencies."""
        _, h = signal.freqz(self.numerator, self.denominator, worN=np.asarray(freqs_hz, dtype=float),
                            fs=self.sample_rate_hz)
        return h


def _check_band(lo_hz, hi_hz, fs):
    if not 0 < lo_hz < hi_hz < fs / 2:
        raise ValidationError(f"band {lo_hz}-{hi_hz} Hz must satisfy 0 < lo < hi < {fs / 2} Hz")


def design_bandpass(order=config.ANALYSIS_ORDER, lo_hz=config.ANALYSIS_BAND_HZ[0],
                    hi_hz=config.ANALYSIS_BAND_HZ[1], fs=config.SAMPLE_RATE_HZ):
    """Digital Butterworth band-pass (bilinear transform, prewarped edges).

    Args:
        order (int): Prototype order; the band-pass has twice as many poles
        lo_hz (float): Lower -3 dB edge
        hi_hz (float): Upper -3 dB edge
        fs (float): Sample rate

    Returns:
        FilterCoefficients: Normalised so ``denominator[0] == 1``
    """
    _check_band(lo_hz, hi_hz, fs)
    band = [lo_hz, hi_hz]
    b, a = signal.butter(order, band, btype="bandpass", fs=fs)
    sos = signal.butter(order, band, btype="bandpass", fs=fs, output="sos")
    b, a = b / a[0], a / a[0]
    return FilterCoefficients(b, a, order, lo_hz, hi_hz, fs, sos=sos)


def design_notch(freq_hz=config.NOTCH_HZ, q=config.NOTCH_Q, fs=config.SAMPLE_RATE_HZ):
    """Second-order IIR notch."""
    if not 0 < freq_hz < fs / 2:
        raise ValidationError(f"notch frequency {freq_hz} Hz must lie below Nyquist {fs / 2} Hz")
    b, a = signal.iirnotch(freq_hz, q, fs=fs)
    bandwidth = freq_hz / q
    b, a = b / a[0], a / a[0]
    return FilterCoefficients(b, a, 2, freq_hz - bandwidth / 2, freq_hz + bandwidth / 2, fs, "notch",
                              sos=signal.tf2sos(b, a))


def acquisition_chain(fs=config.SAMPLE_RATE_HZ):
    """Recorder filters in application order."""
    lo, hi = config.ACQUISITION_BAND_HZ
    return (design_bandpass(config.ACQUISITION_ORDER, lo, hi, fs), design_notch(fs=fs))


def apply_filter(coeffs, x, axis=-1):
    """Causal IIR filtering in second-order sections from a zero initial state.

    Args:
        coeffs (FilterCoefficients): Stable filter
        x (numpy.ndarray): Finite signal, filtered along ``axis``

    Returns:
        numpy.ndarray: Filtered signal of the same shape
    """
    if not coeffs.is_stable():
        raise ValidationError(f"unstable {coeffs.kind} filter: pole radius {np.abs(coeffs.poles()).max():.6f}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite samples")
    return signal.sosfilt(coeffs.sections(), x, axis=axis)


def acquire(recording):
    """Pass raw scalp potentials through the recorder and store float32.

    Returns:
        ContinuousRecording: Copy with filtered float32 data
    """
    data = recording.data
    for coeffs in acquisition_chain(recording.sample_rate_hz):
        data = apply_filter(coeffs, data, axis=1)
    return replace(recording, data=data.astype(np.float32))


def analysis_filter(data, coeffs=None):
    """Apply the analysis band-pass to a channels x samples array."""
    coeffs = coeffs or design_bandpass()
    return apply_filter(coeffs, data, axis=1)


@dataclass(frozen=True)
class Epoch:
    data: np.ndarray
    onset_sample: int
    is_target: bool
    block_index: int
    trial_index: int
    group_id: int


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: int


def _window_bounds(events, n_samples, pre=PRE_SAMPLES, post=POST_SAMPLES):
    for index, event in enumerate(events):
        start, stop = event.onset_sample - pre, event.onset_sample + post
        if start < 0 or stop > n_samples:
            raise ValidationError(
                f"event {index} at sample {event.onset_sample} needs samples {start}..{stop}, "
                f"recording has {n_samples}")


def extract_epochs(data, events, pre_ms=config.EPOCH_PRE_MS, post_ms=config.EPOCH_POST_MS,
                   fs=config.SAMPLE_RATE_HZ):
    """Cut one window per flash event.

    Args:
        data (numpy.ndarray): channels x samples
        events (list): FlashEvent objects
        pre_ms (float): Prestimulus span
        post_ms (float): Poststimulus span

    Returns:
        list: Epoch objects of ``pre + post`` samples
    """
    pre = int(round(pre_ms * fs / 1000.0))
    post = int(round(post_ms * fs / 1000.0))
    _window_bounds(events, data.shape[1], pre, post)
    return [
        Epoch(np.array(data[:, e.onset_sample - pre:e.onset_sample + post], dtype=float),
              e.onset_sample, e.is_target, e.block_index, e.trial_index, e.group_id)
        for e in events
    ]


def baseline_correct(epoch, pre_samples=PRE_SAMPLES):
    """Subtract each channel's prestimulus mean."""
    baseline = epoch.data[:, :pre_samples].mean(axis=1, keepdims=True)
    return replace(epoch, data=epoch.data - baseline)


def features(epoch):
    """Every seventh poststimulus sample of every channel, channel-major.

    Returns:
        FeatureVector: 480 values labelled +1 (target) or -1
    """
    if epoch.data.shape != (len(config.CHANNELS), EPOCH_SAMPLES):
        raise ValidationError(
            f"epoch shape {epoch.data.shape} != {(len(config.CHANNELS), EPOCH_SAMPLES)}")
    values = epoch.data[:, PRE_SAMPLES + DECIMATION_INDEX].reshape(-1)
    return FeatureVector(values, 1 if epoch.is_target else -1)


def feature_matrix(data, events):
    """Baseline-corrected decimated features for many events at once.

    Equivalent to ``features(baseline_correct(e))`` over ``extract_epochs``
    without materialising full epochs.

    Returns:
        tuple: (N x 481 design matrix with a trailing column of ones, labels in {-1, +1})
    """
    _window_bounds(events, data.shape[1])
    onsets = np.array([e.onset_sample for e in events], dtype=int)
    pre_index = onsets[:, None] + np.arange(-PRE_SAMPLES, 0)[None, :]
    post_index = onsets[:, None] + DECIMATION_INDEX[None, :]

    baseline = data[:, pre_index].mean(axis=2)                 # channels x N
    decimated = data[:, post_index] - baseline[:, :, None]     # channels x N x 30
    X = decimated.transpose(1, 0, 2).reshape(len(events), -1)
    X = np.hstack([X, np.ones((len(events), 1))])
    y = np.array([1.0 if e.is_target else -1.0 for e in events])
    return X, y


def band_power(x, fs=config.SAMPLE_RATE_HZ, band=config.ALPHA_BAND_HZ,
               window_s=config.WELCH_WINDOW_S, overlap=config.WELCH_OVERLAP):
    """Mean Welch PSD over a frequency band.

    Args:
        x (numpy.ndarray): 1-D signal in microvolts
        fs (float): Sample rate
        band (tuple): (lo, hi) in Hz, inclusive

    Returns:
        float: Mean power spectral density in uV^2/Hz
    """
    nperseg = int(round(window_s * fs))
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < nperseg:
        raise ValidationError(f"band power needs at least {nperseg} samples, got {x.shape}")
    freqs, psd = signal.welch(x, fs=fs, window="hann", nperseg=nperseg,
                              noverlap=int(round(nperseg * overlap)), detrend="constant")
    in_band = (freqs >= band[0]) & (freqs <= band[1])
    if not np.any(in_band):
        raise ValidationError(f"band {band} contains no Welch bins at {fs / nperseg} Hz resolution")
    return float(psd[in_band].mean())
