"""Runtime settings read from the environment"""
import logging
import os

from dotenv import load_dotenv

# Load environment variables from the working directory
load_dotenv('.env')

LOG_LEVEL = os.getenv("UCMAB_LOG_LEVEL", "INFO")
JOBS = int(os.getenv("UCMAB_JOBS", "1"))
OUTPUT_DIR = os.getenv("UCMAB_OUTPUT_DIR", "results")
CHECKPOINT_DIR = os.getenv("UCMAB_CHECKPOINT_DIR", "checkpoints")
HILLSTROM_CSV = os.getenv("UCMAB_HILLSTROM_CSV")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def secret_key() -> str:
    """Signing key for service tokens, read lazily so the library works without it"""
    key = os.getenv("UCMAB_SECRET_KEY")
    if not key:
        raise ValueError("Missing UCMAB_SECRET_KEY environment variable in .env")
    return key


def configure_logging(level: str | int | None = None) -> None:
    """Install the root handler used by the CLI and the service"""
    logging.basicConfig(level=level or LOG_LEVEL, format=LOG_FORMAT, force=True)
