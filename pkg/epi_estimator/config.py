import os
from dotenv import load_dotenv

# Load environment variables from a .env file if present
load_dotenv()

# --- Application Identity ---
APP_NAME = os.getenv("APP_NAME", "EpiFoundry")
APP_VERSION = "0.1.0"
APP_SLOGAN = "Pair-based rates from partially observed outbreaks"
SCHEMA_VERSION = "1.0"

# --- Numerical Defaults ---
DEFAULT_SEED = int(os.getenv("EPI_SEED", "20261016"))
MAX_WORKERS = int(os.getenv("EPI_MAX_WORKERS", "1"))
# Significant digits for every float written to JSON or CSV
FLOAT_DIGITS = int(os.getenv("EPI_FLOAT_DIGITS", "12"))
ORACLE_FALLBACK_SAMPLES = int(os.getenv("EPI_ORACLE_SAMPLES", "100000"))
MAX_CONDITIONING_TRIES = int(os.getenv("EPI_MAX_TRIES", "10000"))
DEQUANTIZE_MAX_TRIES = 100
# |γ_j − γ_k| below this fraction of max(γ_j, γ_k) uses the equal-rate branch
EQUAL_RATE_TOLERANCE = 1e-8

# --- Logging ---
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
ENABLE_DEBUG = os.getenv("DEBUG", "false").lower() == "true"

# --- UI Theme (Rich Styles) ---
STYLE_PRIMARY = "cyan"
STYLE_SECONDARY = "magenta"
STYLE_SUCCESS = "green"
STYLE_ERROR = "bold red"
STYLE_WARNING = "yellow"
STYLE_PANEL_BORDER = "blue"
