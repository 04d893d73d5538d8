"""
Configuration settings for the erpspeller package.
"""

import os

# Acquisition settings
SAMPLE_RATE_HZ = 256
CHANNELS = [
    "F3", "Fz", "F4", "FC1", "FC2", "C3", "Cz", "C4",
    "P7", "P3", "Pz", "P4", "P8", "O1", "Oz", "O2",
]
N_CHANNELS = len(CHANNELS)
ACQUISITION_BAND_HZ = (0.5, 30.0)
ACQUISITION_ORDER = 3
NOTCH_HZ = 50.0
NOTCH_Q = 30.0

# Stimulus settings
N_GROUPS = 12
N_ITEMS = 42
SOA_MS = 200
FLASH_ON_MS = 100
TRIAL_S = N_GROUPS * SOA_MS / 1000.0  # 2.4 s
CIRCULANT_STEPS = (1, 2, 3, 6)

# Display geometry (cm)
VIEWING_DISTANCE_CM = 80.0
DISPLAY_WIDTH_CM = 26.0
DISPLAY_HEIGHT_CM = 19.5
# Target eccentricity ranges the shipped pitches are calibrated to (degrees)
ANGLE_RANGE_DEG = {
    "MS_P": (1.07, 9.58),
    "LS_P": (4.43, 12.34),
}

# Protocol settings
FEEDBACK_S = 4.0
OFFLINE_RUNS = 3
OFFLINE_BLOCKS_PER_RUN = 5
OFFLINE_TRIALS_PER_BLOCK = 16
INTER_RUN_BREAK_S = 180.0
ONLINE_BLOCKS = 42
MIN_TRIALS = 2
MAX_TRIALS = 16
FATIGUE_HORIZON_S = 430.0  # mean MS-P online session length
SEGMENT_TAIL_S = 1.0
COPY_TARGET_SEED = 2017

# Feature extraction settings
EPOCH_PRE_MS = 100
EPOCH_POST_MS = 800
DECIMATION_STEP = 7
ANALYSIS_BAND_HZ = (1.0, 30.0)
ANALYSIS_ORDER = 3

# Band power settings
WELCH_WINDOW_S = 2.0
WELCH_OVERLAP = 0.5
THETA_BAND_HZ = (4.0, 7.5)
ALPHA_BAND_HZ = (8.0, 13.0)
THETA_CHANNEL = "Fz"
ALPHA_CHANNEL = "Pz"

# BLDA settings
BLDA_TOLERANCE = 1e-4
BLDA_MAX_ITERATIONS = 100
BLDA_INITIAL_ALPHA = 1.0
BLDA_INITIAL_BETA = 1.0
BLDA_MAX_BETA = 1e10

# Synthetic subject settings
PINK_POLE = 0.95
ALPHA_FREQ_HZ = 10.0
ERP_KERNEL_S = 1.0

# Analysis settings
ALPHA_LEVEL = 0.05
ACCURACY_THRESHOLD_PCT = 80.0
BIT_RATE_THRESHOLD = 30.0
BIT_RATE_TOLERANCE = 0.15

# Resource paths
ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RESOURCES_DIR = os.path.join(ROOT_DIR, "resources")
PARADIGMS_DIR = os.path.join(ROOT_DIR, "paradigms")
LABELS_FILE = os.path.join(RESOURCES_DIR, "labels.txt")
TABLE2_FILE = os.path.join(RESOURCES_DIR, "table2.csv")
DEFAULT_CONFIG_FILE = os.path.join(RESOURCES_DIR, "default.json")

# Container format
FORMAT_VERSION = 1

# Debug mode
DEBUG = False
