"""
Session container and model file I/O.

A session container is a directory::

    meta.json     UTF-8 JSON: format_version, sample_rate_hz, channels,
                  paradigm_id, geometry, protocol, profile, seed, n_samples
    eeg.f32le     little-endian float32, sample-major (16 values per sample)
    events.csv    sample_index,group_id,block_index,trial_index,is_target
    targets.csv   block_index,target_item

See docs/formats.md for byte-level examples.
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from erpspeller.core import config
from erpspeller.core.blda import BldaModel
from erpspeller.core.errors import ContainerError
from erpspeller.core.paradigm import FlashEvent
from erpspeller.core.synth import ContinuousRecording

logger = logging.getLogger(__name__)

META_FILE = "meta.json"
EEG_FILE = "eeg.f32le"
EVENTS_FILE = "events.csv"
TARGETS_FILE = "targets.csv"
EVENT_COLUMNS = ["sample_index", "group_id", "block_index", "trial_index", "is_target"]
TARGET_COLUMNS = ["block_index", "target_item"]
META_KEYS = ("format_version", "sample_rate_hz", "channels", "paradigm_id", "geometry",
             "protocol", "profile", "seed", "n_samples")
EEG_DTYPE = np.dtype("<f4")


@dataclass
class SessionContainer:
    recording: ContinuousRecording
    paradigm_id: str
    seed: int
    geometry: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)


def save_session(path, container):
    """Write a session container directory, creating it if needed.

    Samples are stored as float32; float32 recordings round-trip bit-exactly.
    """
    recording = container.recording
    os.makedirs(path, exist_ok=True)
    meta = {
        "format_version": config.FORMAT_VERSION,
        "sample_rate_hz": recording.sample_rate_hz,
        "channels": list(recording.channels),
        "paradigm_id": container.paradigm_id,
        "geometry": container.geometry,
        "protocol": container.protocol,
        "profile": container.profile,
        "seed": int(container.seed),
        "n_samples": int(recording.n_samples),
    }
    with open(os.path.join(path, META_FILE), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")

    with open(os.path.join(path, EEG_FILE), "wb") as f:
        f.write(np.ascontiguousarray(recording.data.T, dtype=EEG_DTYPE).tobytes())

    events = pd.DataFrame(
        [(e.onset_sample, e.group_id, e.block_index, e.trial_index, int(e.is_target)) for e in recording.events],
        columns=EVENT_COLUMNS,
    )
    events.to_csv(os.path.join(path, EVENTS_FILE), index=False, lineterminator="\n")

    first_block = recording.events[0].block_index if recording.events else 0
    targets = pd.DataFrame(
        [(first_block + i, t) for i, t in enumerate(recording.block_targets)],
        columns=TARGET_COLUMNS,
    )
    targets.to_csv(os.path.join(path, TARGETS_FILE), index=False, lineterminator="\n")
    logger.info("Saved session container %s (%d samples, %d events)", path, recording.n_samples,
                len(recording.events))


def _require(path, name):
    file_path = os.path.join(path, name)
    if not os.path.isfile(file_path):
        raise ContainerError("missing_file", f"{file_path} does not exist")
    return file_path


def _read_meta(path):
    try:
        with open(_require(path, META_FILE), "r", encoding="utf-8") as f:
            meta = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ContainerError("meta_malformed", f"{META_FILE} is not valid UTF-8 JSON: {e}") from None
    if not isinstance(meta, dict):
        raise ContainerError("meta_malformed", f"{META_FILE} must hold a JSON object")
    missing = [key for key in META_KEYS if key not in meta]
    if missing:
        raise ContainerError("meta_malformed", f"{META_FILE} lacks keys: {', '.join(missing)}")
    if meta["format_version"] != config.FORMAT_VERSION:
        raise ContainerError("version_mismatch",
                             f"container format_version {meta['format_version']!r}, "
                             f"this reader supports {config.FORMAT_VERSION}")
    channels = meta["channels"]
    if channels != config.CHANNELS:
        raise ContainerError("montage_mismatch",
                             f"montage requires {len(config.CHANNELS)} channels {config.CHANNELS}, got {channels}")
    if meta["sample_rate_hz"] != config.SAMPLE_RATE_HZ:
        raise ContainerError("meta_malformed", f"sample_rate_hz must be {config.SAMPLE_RATE_HZ}")
    if not isinstance(meta["n_samples"], int) or meta["n_samples"] < 0:
        raise ContainerError("meta_malformed", "n_samples must be a non-negative integer")
    return meta


def _read_csv(path, name, columns):
    try:
        table = pd.read_csv(_require(path, name))
    except pd.errors.EmptyDataError:
        raise ContainerError("csv_schema", f"{name} is empty; expected header {','.join(columns)}") from None
    except pd.errors.ParserError as e:
        raise ContainerError("csv_schema", f"{name} cannot be parsed: {e}") from None
    if list(table.columns) != columns:
        raise ContainerError("csv_schema", f"{name} header {list(table.columns)} != {columns}")
    for column in columns:
        if len(table) and not pd.api.types.is_integer_dtype(table[column]):
            raise ContainerError("csv_schema", f"{name} column {column} must hold integers")
    return table


def load_session(path):
    """Read a session container written by ``save_session``.

    Raises:
        ContainerError: With code ``missing_file``, ``meta_malformed``,
            ``version_mismatch``, ``montage_mismatch``,
            ``payload_size_mismatch`` or ``csv_schema``
    """
    meta = _read_meta(path)
    n_channels, n_samples = len(meta["channels"]), meta["n_samples"]

    eeg_path = _require(path, EEG_FILE)
    expected = EEG_DTYPE.itemsize * n_channels * n_samples
    actual = os.path.getsize(eeg_path)
    if actual != expected:
        raise ContainerError("payload_size_mismatch",
                             f"payload size mismatch: {EEG_FILE} has {actual} bytes, expected {expected}")
    with open(eeg_path, "rb") as f:
        payload = np.frombuffer(f.read(), dtype=EEG_DTYPE)
    data = payload.reshape(n_samples, n_channels).T.astype(np.float32)

    events_table = _read_csv(path, EVENTS_FILE, EVENT_COLUMNS)
    if len(events_table):
        if not events_table["is_target"].isin([0, 1]).all():
            raise ContainerError("csv_schema", f"{EVENTS_FILE} is_target must be 0 or 1")
        if not events_table["group_id"].between(0, config.N_GROUPS - 1).all():
            raise ContainerError("csv_schema", f"{EVENTS_FILE} group_id must lie in 0..{config.N_GROUPS - 1}")
        if not events_table["sample_index"].between(0, max(n_samples - 1, 0)).all():
            raise ContainerError("csv_schema", f"{EVENTS_FILE} sample_index outside 0..{n_samples - 1}")
    events = tuple(
        FlashEvent(int(r.sample_index), int(r.group_id), int(r.block_index), int(r.trial_index), bool(r.is_target))
        for r in events_table.itertuples(index=False)
    )

    targets_table = _read_csv(path, TARGETS_FILE, TARGET_COLUMNS)
    block_targets = tuple(int(t) for t in targets_table.sort_values("block_index")["target_item"])

    recording = ContinuousRecording(data, events, block_targets, meta["sample_rate_hz"], tuple(meta["channels"]))
    logger.info("Loaded session container %s (%d samples, %d events)", path, n_samples, len(events))
    return SessionContainer(recording, meta["paradigm_id"], meta["seed"], meta["geometry"],
                            meta["protocol"], meta["profile"])


def save_model(path, model):
    """Write a trained model as JSON; floats round-trip exactly."""
    document = {
        "format_version": config.FORMAT_VERSION,
        "weights": [float(w) for w in model.weights],
        "alpha": model.alpha,
        "beta": model.beta,
        "n_iterations": model.n_iterations,
        "evidence_trace": list(model.evidence_trace),
        "converged": model.converged,
        "regularize_bias": model.regularize_bias,
        "metadata": model.metadata,
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
        f.write("\n")
    logger.info("Saved model %s (%d weights)", path, len(model.weights))


def load_model(path):
    if not os.path.isfile(path):
        raise ContainerError("missing_file", f"{path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ContainerError("meta_malformed", f"{path} is not valid UTF-8 JSON: {e}") from None
    if not isinstance(document, dict) or "format_version" not in document:
        raise ContainerError("meta_malformed", f"{path} is not a model file")
    if document["format_version"] != config.FORMAT_VERSION:
        raise ContainerError("version_mismatch",
                             f"model format_version {document['format_version']!r}, "
                             f"this reader supports {config.FORMAT_VERSION}")
    try:
        return BldaModel(
            weights=np.array(document["weights"], dtype=float),
            alpha=float(document["alpha"]),
            beta=float(document["beta"]),
            n_iterations=int(document["n_iterations"]),
            evidence_trace=tuple(float(v) for v in document["evidence_trace"]),
            converged=bool(document.get("converged", True)),
            regularize_bias=bool(document.get("regularize_bias", False)),
            metadata=dict(document.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ContainerError("meta_malformed", f"{path} has a malformed field: {e}") from None
