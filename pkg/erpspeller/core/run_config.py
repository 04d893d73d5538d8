"""
Run configuration: a JSON document layered over built-in defaults.

Every key must exist in the defaults; unknown keys and wrongly typed values
are rejected with their dotted path.
"""

import copy
import json
import logging
import os

from erpspeller.core import config
from erpspeller.core.errors import ValidationError
from erpspeller.core.session import OfflineProtocol, OnlineProtocol, ProtocolConfig
from erpspeller.core.synth import ErpComponent, SubjectProfile

logger = logging.getLogger(__name__)

# Keys whose default is None but which accept a JSON list
LIST_KEYS = {"protocol.copy_targets", "profile.erp_components", "cohort.seeds"}

DEFAULTS = {
    "paradigm": "MS_P",
    "protocol": {
        "offline": {
            "runs": config.OFFLINE_RUNS,
            "blocks_per_run": config.OFFLINE_BLOCKS_PER_RUN,
            "trials_per_block": config.OFFLINE_TRIALS_PER_BLOCK,
            "inter_run_break_s": config.INTER_RUN_BREAK_S,
        },
        "online": {
            "blocks": config.ONLINE_BLOCKS,
            "feedback_s": config.FEEDBACK_S,
            "min_trials": config.MIN_TRIALS,
            "max_trials": config.MAX_TRIALS,
            "fatigue_horizon_s": config.FATIGUE_HORIZON_S,
        },
        "copy_targets": None,
        "segment_tail_s": config.SEGMENT_TAIL_S,
    },
    "profile": {
        "erp_components": None,
        "nontarget_gain": 0.1,
        "noise_rms_uv": 5.0,
        "alpha_base_uv": 2.0,
        "alpha_drift_rate": 0.3,
        "amplitude_jitter": 0.5,
        "erp_decline_rate": 0.2,
    },
    "cohort": {
        "seeds": 18,
        "first_seed": 1,
        "amplitude_spread": 0.2,
        "counterbalance": True,
        "workers": 1,
        "evaluate_offline": False,
    },
    "classifier": {
        "tolerance": config.BLDA_TOLERANCE,
        "max_iterations": config.BLDA_MAX_ITERATIONS,
        "regularize_bias": False,
        "balance_classes": False,
    },
    "analysis": {
        "split_block": config.ONLINE_BLOCKS // 2,
        "accuracy_threshold_pct": config.ACCURACY_THRESHOLD_PCT,
        "bit_rate_threshold": config.BIT_RATE_THRESHOLD,
        "bit_rate_tolerance": config.BIT_RATE_TOLERANCE,
        "lilliefors": False,
    },
}


def _type_ok(default, value, dotted):
    if dotted == "cohort.seeds":
        return (isinstance(value, int) and not isinstance(value, bool)) or (
            isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value))
    if dotted in LIST_KEYS:
        return value is None or isinstance(value, list)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    return False


def merge(defaults, overrides, prefix=""):
    """Overlay a user document on the defaults, validating as it goes."""
    if not isinstance(overrides, dict):
        raise ValidationError(f"config section {prefix or '<root>'} must be a JSON object")
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        dotted = f"{prefix}{key}"
        if key not in defaults:
            raise ValidationError(f"unknown config key: {dotted}")
        default = defaults[key]
        if isinstance(default, dict):
            merged[key] = merge(default, value, dotted + ".")
        elif not _type_ok(default, value, dotted):
            raise ValidationError(f"config key {dotted} has the wrong type: {value!r}")
        else:
            merged[key] = float(value) if isinstance(default, float) else value
    return merged


class RunConfig:
    """Validated run configuration with builders for the domain objects."""

    def __init__(self, document=None, source="<defaults>"):
        self.data = merge(DEFAULTS, document or {})
        self.source = source
        # Build once so invalid combinations fail at load time
        self.protocol()
        self.profile()
        self.seeds()

    @property
    def paradigm_id(self):
        return self.data["paradigm"]

    def protocol(self, paradigm_id=None):
        section = self.data["protocol"]
        return ProtocolConfig(
            paradigm_id=paradigm_id or self.paradigm_id,
            offline=OfflineProtocol(**section["offline"]),
            online=OnlineProtocol(**section["online"]),
            copy_targets=section["copy_targets"],
            segment_tail_s=section["segment_tail_s"],
        )

    def profile(self, seed=0):
        section = dict(self.data["profile"])
        components = section.pop("erp_components")
        if components is not None:
            try:
                section["erp_components"] = tuple(ErpComponent(**c) for c in components)
            except TypeError as e:
                raise ValidationError(f"profile.erp_components entry is malformed: {e}") from None
        return SubjectProfile(seed=seed, **section)

    def seeds(self):
        cohort = self.data["cohort"]
        seeds = cohort["seeds"]
        if isinstance(seeds, int):
            if seeds < 1:
                raise ValidationError("cohort.seeds must be at least 1")
            return list(range(cohort["first_seed"], cohort["first_seed"] + seeds))
        if not seeds:
            raise ValidationError("cohort.seeds list is empty")
        return list(seeds)

    def with_seed_count(self, n_seeds):
        data = copy.deepcopy(self.data)
        data["cohort"]["seeds"] = int(n_seeds)
        return RunConfig(data, self.source)

    @property
    def cohort(self):
        return self.data["cohort"]

    @property
    def analysis(self):
        return self.data["analysis"]

    def train_options(self):
        return dict(self.data["classifier"])

    def to_dict(self):
        return copy.deepcopy(self.data)


def resolve_config_path(name):
    """Filesystem path first, then a bundled resource of the same name."""
    if os.path.isfile(name):
        return name
    bundled = os.path.join(config.RESOURCES_DIR, os.path.basename(name))
    if os.path.isfile(bundled):
        return bundled
    raise ValidationError(f"config {name!r} not found on disk or among bundled resources")


def load_run_config(name=None):
    """Load and validate a run configuration.

    Args:
        name (str): Path or bundled resource name; None loads ``default.json``

    Returns:
        RunConfig: Validated configuration
    """
    path = resolve_config_path(name or config.DEFAULT_CONFIG_FILE)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"config {path} is not valid JSON: {e}") from None
    logger.debug("Loaded run config %s", path)
    return RunConfig(document, path)
