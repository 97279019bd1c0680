"""
Configuration management for the bmprior toolkit
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
env_path = Path(__file__).parent / ".env"
load_dotenv(env_path)

class Settings:
    """Toolkit settings loaded from environment variables"""

    PROJECT_NAME: str = "bmprior"
    VERSION: str = "1.0.0"
    REPORT_SCHEMA_VERSION: int = 1

    # Logging
    LOG_LEVEL: str = os.getenv("BMPRIOR_LOG_LEVEL", "INFO")

    # Parallelism (0 means all cores)
    THREADS: int = int(os.getenv("BMPRIOR_THREADS", "0"))

    # Randomness
    DEFAULT_SEED: int = int(os.getenv("BMPRIOR_SEED", "0"))

    # Monte Carlo defaults
    MC_SWEEPS: int = int(os.getenv("BMPRIOR_MC_SWEEPS", "10000"))
    MC_BURN_IN: int = int(os.getenv("BMPRIOR_MC_BURN_IN", "1000"))
    MC_CHAINS: int = int(os.getenv("BMPRIOR_MC_CHAINS", "4"))

    # Learning defaults
    GRAD_TOL: float = float(os.getenv("BMPRIOR_GRAD_TOL", "1e-3"))
    LEARN_MAX_ITERS: int = int(os.getenv("BMPRIOR_LEARN_MAX_ITERS", "200"))

    # Dithering
    RIEMERSMA_QUEUE: int = int(os.getenv("BMPRIOR_RIEMERSMA_QUEUE", "16"))
    RIEMERSMA_RATIO: float = float(os.getenv("BMPRIOR_RIEMERSMA_RATIO", "16"))
    DEFAULT_THRESHOLD: float = 0.5

    # Analysis
    HISTOGRAM_BIN_WIDTH: float = 0.02
    FRUSTRATION_THRESHOLD: float = 0.05

    @property
    def threads(self) -> int:
        """Resolved worker thread count"""
        if self.THREADS > 0:
            return self.THREADS
        return os.cpu_count() or 1

settings = Settings()
