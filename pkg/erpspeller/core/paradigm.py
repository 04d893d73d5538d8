"""
Speller displays, the 12-group flash code, visual-angle geometry and stimulus
scheduling.
"""

import logging
import math
import os
import importlib
import importlib.util
from dataclasses import dataclass, field, asdict

import numpy as np

from erpspeller.core import config
from erpspeller.core.errors import ValidationError

logger = logging.getLogger(__name__)

PARADIGM_IDS = ("MS_P", "LS_P")
SAMPLES_PER_SOA = config.SOA_MS * config.SAMPLE_RATE_HZ / 1000.0  # 51.2


def visual_angle(position_cm, viewing_distance_cm=config.VIEWING_DISTANCE_CM):
    """Eccentricity of a point on the display as seen from the viewer.

    Args:
        position_cm: 2-vector from the display centre
        viewing_distance_cm (float): Eye to display distance

    Returns:
        float: Visual angle in degrees
    """
    if viewing_distance_cm <= 0:
        raise ValidationError(f"viewing distance must be positive, got {viewing_distance_cm}")
    radius = float(np.hypot(position_cm[0], position_cm[1]))
    return math.degrees(math.atan2(radius, viewing_distance_cm))


@dataclass(frozen=True)
class DisplayGeometry:
    width_cm: float = config.DISPLAY_WIDTH_CM
    height_cm: float = config.DISPLAY_HEIGHT_CM
    viewing_distance_cm: float = config.VIEWING_DISTANCE_CM
    cell_pitch_x_cm: float = 3.0
    cell_pitch_y_cm: float = 3.0
    center_offset_cm: tuple = (0.0, 0.0)

    def __post_init__(self):
        lengths = {
            "width_cm": self.width_cm,
            "height_cm": self.height_cm,
            "viewing_distance_cm": self.viewing_distance_cm,
            "cell_pitch_x_cm": self.cell_pitch_x_cm,
            "cell_pitch_y_cm": self.cell_pitch_y_cm,
        }
        for name, value in lengths.items():
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"geometry.{name} must be a positive length, got {value}")
        if len(self.center_offset_cm) != 2:
            raise ValidationError("geometry.center_offset_cm must be a 2-vector")
        object.__setattr__(self, "center_offset_cm", tuple(float(v) for v in self.center_offset_cm))

    def to_dict(self):
        data = asdict(self)
        data["center_offset_cm"] = list(self.center_offset_cm)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**{**data, "center_offset_cm": tuple(data.get("center_offset_cm", (0.0, 0.0)))})


@dataclass(frozen=True)
class LayoutItem:
    label: str
    grid_row: int
    grid_col: int
    position_cm: tuple
    visual_angle_deg: float


@dataclass(frozen=True)
class SpellerLayout:
    paradigm_id: str
    items: tuple
    feedback_region: str
    geometry: DisplayGeometry

    @property
    def labels(self):
        return [item.label for item in self.items]

    @property
    def visual_angles(self):
        return np.array([item.visual_angle_deg for item in self.items])

    def angle_range(self):
        """Smallest and largest target eccentricity in degrees."""
        angles = self.visual_angles
        return float(angles.min()), float(angles.max())


@dataclass(frozen=True)
class FlashCode:
    n_groups: int
    item_to_pair: tuple
    group_members: tuple
    membership: np.ndarray = field(repr=False, compare=False)

    @property
    def n_items(self):
        return len(self.item_to_pair)

    def groups_of(self, item):
        return self.item_to_pair[item]

    def item_for_pair(self, group_a, group_b):
        pair = (min(group_a, group_b), max(group_a, group_b))
        try:
            return self.item_to_pair.index(pair)
        except ValueError:
            raise ValidationError(f"no item is coded by groups {pair}") from None


@dataclass(frozen=True)
class FlashEvent:
    onset_sample: int
    group_id: int
    block_index: int
    trial_index: int
    is_target: bool


@dataclass(frozen=True)
class StimulusSchedule:
    """Flash events of one recording plus the sample capacity they must fit in."""

    events: tuple
    block_targets: tuple
    n_samples: int

    def block_events(self, block_index):
        return [event for event in self.events if event.block_index == block_index]


class ParadigmManager:
    def __init__(self):
        self.paradigms = {}

    def load_paradigms(self):
        """Load all paradigm modules from the paradigms directory."""
        paradigm_path = config.PARADIGMS_DIR

        loaded = {}

        for filename in sorted(os.listdir(paradigm_path)):
            if filename.endswith('.py') and not filename.startswith('__'):
                module_name = os.path.splitext(filename)[0]
                file_path = os.path.join(paradigm_path, filename)

                try:
                    spec = importlib.util.spec_from_file_location(module_name, file_path)
                    module = importlib.util.module_from_spec(spec)
                    spec.loader.exec_module(module)
                except Exception as e:
                    logger.warning("Failed to load paradigm %s: %s", module_name, e)
                    continue

                if hasattr(module, 'cell_offsets') and hasattr(module, 'PARADIGM_ID'):
                    loaded[module.PARADIGM_ID] = module
                    logger.debug("Loaded paradigm: %s (%s)", module.PARADIGM_ID, module_name)

        self.paradigms = loaded

    def get_paradigm_ids(self):
        """Get identifiers of all loaded paradigms.

        Returns:
            list: Paradigm identifiers, e.g. ``["LS_P", "MS_P"]``
        """
        return sorted(self.paradigms.keys())

    def get_paradigm(self, paradigm_id):
        """Look up a loaded paradigm module.

        Args:
            paradigm_id (str): ``MS_P`` or ``LS_P``

        Returns:
            module: The paradigm plug-in
        """
        if not self.paradigms:
            self.load_paradigms()
        if paradigm_id not in self.paradigms:
            raise ValidationError(
                f"unknown paradigm {paradigm_id!r}; available: {', '.join(self.get_paradigm_ids())}")
        return self.paradigms[paradigm_id]


_manager = ParadigmManager()


def get_paradigm(paradigm_id):
    return _manager.get_paradigm(paradigm_id)


def load_labels(path=config.LABELS_FILE):
    """Read the 42 item labels, one per line, in row-major order."""
    with open(path, 'r', encoding='utf-8') as f:
        labels = [line.strip() for line in f if line.strip()]
    if len(labels) != config.N_ITEMS or len(set(labels)) != len(labels):
        raise ValidationError(f"{path} must hold {config.N_ITEMS} unique labels, found {len(labels)}")
    return labels


def calibrated_geometry(paradigm_id, angle_range_deg=None, **overrides):
    """Display geometry whose pitches reproduce a paradigm's angle range.

    The nearest item sits on the vertical axis, so the vertical pitch follows
    from the minimum angle alone; the corner item then fixes the horizontal
    pitch.

    Args:
        paradigm_id (str): ``MS_P`` or ``LS_P``
        angle_range_deg (tuple): (min, max) target eccentricity; defaults to
            ``config.ANGLE_RANGE_DEG``
        **overrides: Other DisplayGeometry fields

    Returns:
        DisplayGeometry: Geometry with calibrated ``cell_pitch_x_cm``/``cell_pitch_y_cm``
    """
    paradigm = get_paradigm(paradigm_id)
    lo_deg, hi_deg = angle_range_deg or config.ANGLE_RANGE_DEG[paradigm_id]
    distance = overrides.get("viewing_distance_cm", config.VIEWING_DISTANCE_CM)
    offsets = np.array([(ux, uy) for _, _, ux, uy in paradigm.cell_offsets()])

    axial = offsets[offsets[:, 0] == 0]
    uy_min = np.abs(axial[:, 1]).min()
    pitch_y = distance * math.tan(math.radians(lo_deg)) / uy_min

    corner = offsets[np.argmax(np.abs(offsets[:, 0]) + np.abs(offsets[:, 1]))]
    r_max = distance * math.tan(math.radians(hi_deg))
    horizontal = r_max ** 2 - (corner[1] * pitch_y) ** 2
    if horizontal <= 0:
        raise ValidationError(f"angle range {lo_deg}..{hi_deg} deg cannot be met by the {paradigm_id} grid")
    pitch_x = math.sqrt(horizontal) / abs(corner[0])

    return DisplayGeometry(cell_pitch_x_cm=pitch_x, cell_pitch_y_cm=pitch_y, **overrides)


def build_layout(paradigm_id, geometry=None, labels=None):
    """Place the 42 items of a paradigm on the display.

    Args:
        paradigm_id (str): ``MS_P`` or ``LS_P``
        geometry (DisplayGeometry): Defaults to the calibrated geometry
        labels (list): Item labels; defaults to the bundled label file

    Returns:
        SpellerLayout: Items with positions in cm from the display centre
    """
    paradigm = get_paradigm(paradigm_id)
    geometry = geometry or calibrated_geometry(paradigm_id)
    labels = labels or load_labels()
    cells = paradigm.cell_offsets()
    if len(cells) != len(labels):
        raise ValidationError(f"{paradigm_id} has {len(cells)} cells for {len(labels)} labels")

    cx, cy = geometry.center_offset_cm
    items = []
    for label, (row, col, ux, uy) in zip(labels, cells):
        position = (cx + ux * geometry.cell_pitch_x_cm, cy + uy * geometry.cell_pitch_y_cm)
        items.append(LayoutItem(
            label=label,
            grid_row=row,
            grid_col=col,
            position_cm=position,
            visual_angle_deg=visual_angle(position, geometry.viewing_distance_cm),
        ))
    layout = SpellerLayout(paradigm_id, tuple(items), paradigm.FEEDBACK_REGION, geometry)
    logger.debug("Built %s layout, angles %.2f..%.2f deg", paradigm_id, *layout.angle_range())
    return layout


def build_flash_code(n_groups=config.N_GROUPS, steps=config.CIRCULANT_STEPS):
    """Circulant flash code: item i flashes with the two groups of edge i.

    Edges {g, g+d mod n} for every step d < n/2 and {g, g+n/2} once per
    diameter, sorted lexicographically. With 12 groups and steps (1, 2, 3, 6)
    this gives 42 items and 7 members per group.

    Returns:
        FlashCode: Bijection between items and group pairs
    """
    edges = set()
    for d in steps:
        for g in range(n_groups):
            a, b = g, (g + d) % n_groups
            edges.add((min(a, b), max(a, b)))
    pairs = tuple(sorted(edges))

    members = [set() for _ in range(n_groups)]
    for item, (a, b) in enumerate(pairs):
        members[a].add(item)
        members[b].add(item)

    membership = np.zeros((len(pairs), n_groups))
    for item, (a, b) in enumerate(pairs):
        membership[item, [a, b]] = 1.0
    membership.setflags(write=False)

    return FlashCode(n_groups, pairs, tuple(frozenset(m) for m in members), membership)


def schedule_trial(flash_code, rng_state):
    """Random flash order for one trial.

    Args:
        flash_code (FlashCode): Code whose groups are flashed
        rng_state: Seed, SeedSequence or Generator owned by the caller

    Returns:
        numpy.ndarray: A permutation of the group ids
    """
    rng = np.random.default_rng(rng_state)
    return rng.permutation(flash_code.n_groups)


def flash_onset(flash_index):
    """Onset of the k-th flash of a block, in samples from the block start."""
    return int(round(flash_index * SAMPLES_PER_SOA))


def block_span(n_trials, n_groups=config.N_GROUPS):
    """Samples covered by n_trials of flashing."""
    return flash_onset(n_trials * n_groups)


def schedule_block(flash_code, target_item, n_trials, rng, *, block_index=0, start_sample=0):
    """Flash events for one trial block.

    Args:
        flash_code (FlashCode): Code defining the target's two groups
        target_item (int): Item the subject attends to
        n_trials (int): Trials in the block
        rng (numpy.random.Generator): Flash order source, consumed per trial
        block_index (int): Block coordinate stamped on each event
        start_sample (int): Onset of the first flash

    Returns:
        list: FlashEvent objects in onset order
    """
    target_groups = set(flash_code.groups_of(target_item))
    events = []
    for trial in range(n_trials):
        order = schedule_trial(flash_code, rng)
        for slot, group in enumerate(order):
            k = trial * flash_code.n_groups + slot
            events.append(FlashEvent(
                onset_sample=start_sample + flash_onset(k),
                group_id=int(group),
                block_index=block_index,
                trial_index=trial,
                is_target=int(group) in target_groups,
            ))
    return events


def build_schedule(flash_code, block_targets, n_trials, rng, *, cue_s=config.FEEDBACK_S,
                   tail_s=config.SEGMENT_TAIL_S, first_block=0, sample_rate_hz=config.SAMPLE_RATE_HZ):
    """Schedule consecutive blocks, each preceded by a cue/feedback pause.

    Args:
        flash_code (FlashCode): Flash code
        block_targets (list): Target item per block
        n_trials (int): Trials per block
        rng (numpy.random.Generator): Flash order source
        cue_s (float): Pause before every block
        tail_s (float): Quiet time after the last flash window
        first_block (int): Index given to the first block

    Returns:
        StimulusSchedule: Events and sample capacity of the recording
    """
    cue = int(round(cue_s * sample_rate_hz))
    tail = int(round(tail_s * sample_rate_hz))
    events = []
    cursor = 0
    for offset, target in enumerate(block_targets):
        if not 0 <= target < flash_code.n_items:
            raise ValidationError(f"block target {target} is not an item index")
        cursor += cue
        events.extend(schedule_block(flash_code, target, n_trials, rng,
                                     block_index=first_block + offset, start_sample=cursor))
        cursor += block_span(n_trials, flash_code.n_groups)
    return StimulusSchedule(tuple(events), tuple(int(t) for t in block_targets), cursor + tail)


def layout_to_dict(layout, flash_code):
    """JSON-ready description of a layout and its flash code."""
    return {
        "paradigm_id": layout.paradigm_id,
        "feedback_region": layout.feedback_region,
        "geometry": layout.geometry.to_dict(),
        "n_groups": flash_code.n_groups,
        "items": [
            {
                "index": index,
                "label": item.label,
                "grid_row": item.grid_row,
                "grid_col": item.grid_col,
                "position_cm": [round(v, 4) for v in item.position_cm],
                "visual_angle_deg": round(item.visual_angle_deg, 4),
                "groups": list(flash_code.groups_of(index)),
            }
            for index, item in enumerate(layout.items)
        ],
    }
