# ─────────────────────────────────────────────────────────────────────────────
# constants.py — system dimensions, training defaults, method names
# ─────────────────────────────────────────────────────────────────────────────

NAME = "hblab"
FORMAL = "hblab (joint receive-antenna selection + partially connected hybrid precoding)"

# ── Default system dimensions (desk scale) ──────────────────────────────────
# 16 transmit antennas on 4 RF chains (m = 4 per subarray), select 4 of 8
# receive antennas → C(8, 4) = 70 selection classes.
DESK_NT = 16
DESK_NR = 8
DESK_NSEL = 4
N_RF = 4
N_S = 4

# ── Presets ──────────────────────────────────────────────────────────────────
# large36 / large144: 16 receive antennas, 8 selected → 12870 classes.
# Selection CNNs of this size are for timing only; do not train them here.
PRESETS = {
    "desk": {"nt": DESK_NT, "nr": DESK_NR, "nsel": DESK_NSEL, "nrf": N_RF, "ns": N_S},
    "large36": {"nt": 36, "nr": 16, "nsel": 8, "nrf": N_RF, "ns": N_S},
    "large144": {"nt": 144, "nr": 16, "nsel": 8, "nrf": N_RF, "ns": N_S},
}

# ── Channel model ───────────────────────────────────────────────────────────
NUM_PATHS = 4          # K
PATHLOSS = 1.0         # epsilon

# ── Dataset ──────────────────────────────────────────────────────────────────
# TRAIN_NOISE_SNR_DB — noise level of the L imperfect copies per realization.
# LABEL_SNR_DB       — snr plugged into the exhaustive labeller's rate.
NUM_REALIZATIONS = 100     # N
NUM_NOISY_COPIES = 100     # L
TRAIN_NOISE_SNR_DB = 15.0
LABEL_SNR_DB = 0.0
DATASET_GENERATOR_VERSION = 2

# ── Network / training ──────────────────────────────────────────────────────
CONV_FILTERS = 64
CONV_KERNEL = (2, 2)
FC_NODES = 512
DROPOUT_RATE = 0.5
LEARNING_RATE = 0.005
BATCH_SIZE = 500
EPOCHS = 200
VALIDATION_FRACTION = 0.3

# ── Evaluation ──────────────────────────────────────────────────────────────
SNR_GRID_DB = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0)
EVAL_TRIALS = 100
BENCH_TRIALS = 100

# Method names in the order a sweep reports them, and their CLI aliases.
METHODS = (
    "full_array_optimal",
    "oracle_das_phase_extraction",
    "ras_phase_extraction",
    "cnn_das_cnn_rf",
    "cnn_das_sic",
    "ras_cnn_rf",
    "ras_sic",
)
METHOD_ALIASES = {
    "full": "full_array_optimal",
    "oracle-pe": "oracle_das_phase_extraction",
    "ras-pe": "ras_phase_extraction",
    "cnn": "cnn_das_cnn_rf",
    "sic": "cnn_das_sic",
    "ras-cnn": "ras_cnn_rf",
    "ras-sic": "ras_sic",
}
NEEDS_SELECTION_MODEL = ("cnn_das_cnn_rf", "cnn_das_sic")
NEEDS_PRECODER_MODEL = ("cnn_das_cnn_rf", "ras_cnn_rf")

# ── Exit codes ──────────────────────────────────────────────────────────────
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# ── File names written by gen-data ──────────────────────────────────────────
SELECTION_DATASET_NAME = "sel.hbds"
PRECODER_DATASET_NAME = "rf.hbds"
MANIFEST_DUMP_NAME = "manifest.json"
