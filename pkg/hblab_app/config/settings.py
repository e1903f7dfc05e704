import os


def load_env_file(path: str) -> None:
    """KEY=VALUE lines; values already present in the environment win."""
    try:
        with open(path, "r") as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                k, v = line.split("=", 1)
                k = k.strip()
                v = v.strip().strip('"').strip("'")
                if k and not os.getenv(k):
                    os.environ[k] = v
    except FileNotFoundError:
        pass


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    try:
        return int(raw) if raw.strip() else default
    except ValueError:
        return default


BASE_DIR = os.path.expanduser(os.getenv("HBLAB_HOME", "~/.hblab"))
ENV_PATH = os.path.join(BASE_DIR, "hblab.env")

load_env_file(ENV_PATH)

# Reproducibility
HBLAB_SEED = _env_int("HBLAB_SEED", 7)

# Runtime
HBLAB_LOG_LEVEL = os.getenv("HBLAB_LOG_LEVEL", "INFO").upper()
HBLAB_THREADS = _env_int("HBLAB_THREADS", 0)  # 0 = os.cpu_count()
HBLAB_PROGRESS = os.getenv("HBLAB_PROGRESS", "1").strip() not in ("0", "false", "no", "off")

# Selection oracle: largest C(N_R, N_r) the exhaustive search will enumerate
HBLAB_SUBSET_BUDGET = _env_int("HBLAB_SUBSET_BUDGET", 1_000_000)

# float64 for reproducible training, float32 for large-array benchmarking
HBLAB_NN_DTYPE = os.getenv("HBLAB_NN_DTYPE", "float64").strip().lower()
if HBLAB_NN_DTYPE not in ("float64", "float32"):
    HBLAB_NN_DTYPE = "float64"
