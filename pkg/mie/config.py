"""
Configuration module for the Markovian integral equation solvers.
Handles environment variables and numerical defaults.
"""

import os
from dotenv import load_dotenv

load_dotenv()


def _default_threads() -> int:
    return max(1, min(4, os.cpu_count() or 1))


class Settings:
    """Solver and CLI settings loaded from environment variables."""

    # Parallelism
    THREADS: int = int(os.getenv("MIE_THREADS", str(_default_threads())))

    # Solver defaults
    TOL: float = float(os.getenv("MIE_TOL", "1e-10"))
    MAX_ITER: int = int(os.getenv("MIE_MAX_ITER", "500"))
    CLIP_DEPTH: int = int(os.getenv("MIE_CLIP_DEPTH", "20"))
    BLOWUP_THRESHOLD: float = float(os.getenv("MIE_BLOWUP_THRESHOLD", "1e-2"))

    # Checkers
    CHECK_TOL: float = float(os.getenv("MIE_CHECK_TOL", "1e-9"))

    # Path lift
    PATH_LIFT_BUDGET: int = int(os.getenv("MIE_PATH_LIFT_BUDGET", "1024"))

    # Logging
    DEBUG: bool = os.getenv("DEBUG", "false").lower() == "true"
    LOG_LEVEL: str = os.getenv("MIE_LOG_LEVEL", "INFO").upper()

    @property
    def log_level(self) -> str:
        return "DEBUG" if self.DEBUG else self.LOG_LEVEL

    @property
    def threads(self) -> int:
        return max(1, self.THREADS)


settings = Settings()
