from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import field_validator, Field
from typing import Optional
import logging

load_dotenv()

logger = logging.getLogger(__name__)

class Settings(BaseSettings):
    """
    Lab settings loaded from environment variables.

    Values come from a `.env` file or from `SELECTION_LAB_*` variables,
    e.g. `SELECTION_LAB_SEED=7` pins the master seed of every experiment
    regardless of what the command line says.
    """

    model_config = SettingsConfigDict(env_prefix="SELECTION_LAB_", extra="ignore")

    PORT: int = 8080

    # Experiment defaults
    SEED: Optional[int] = None
    DEFAULT_TRIALS: int = Field(1000, ge=1)
    WORKERS: int = 1

    # Finite-n slack per problem family; the o(1) terms are not quantified
    SECRETARY_SLACK: float = 0.01
    BIPARTITE_SLACK: float = 0.02
    GRAPHIC_SLACK: float = 0.03

    LOG_LEVEL: str = "INFO"

    @field_validator('SEED')
    @classmethod
    def validate_seed(cls, v):
        if v is not None and not 0 <= v < 2**64:
            raise ValueError('SEED must be an unsigned 64-bit integer')
        return v

    @field_validator('WORKERS')
    @classmethod
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError('WORKERS must be at least 1')
        return v

    @field_validator('SECRETARY_SLACK', 'BIPARTITE_SLACK', 'GRAPHIC_SLACK')
    @classmethod
    def validate_slack(cls, v):
        if v < 0:
            raise ValueError('slack must be non-negative')
        return v

    @field_validator('LOG_LEVEL')
    @classmethod
    def validate_log_level(cls, v):
        level = v.upper()
        if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ValueError('LOG_LEVEL must be one of DEBUG, INFO, WARNING, ERROR, CRITICAL')
        return level

    def slack_for(self, problem: str) -> float:
        """Finite-n slack for a problem family; the mechanism shares the bipartite one."""
        if problem == 'secretary':
            return self.SECRETARY_SLACK
        elif problem in ('bipartite', 'truthful'):
            return self.BIPARTITE_SLACK
        elif problem == 'graphic':
            return self.GRAPHIC_SLACK
        logger.warning(f"No slack configured for problem {problem}, using 0")
        return 0.0

    def resolve_seed(self, cli_seed: int) -> int:
        """The environment seed wins over the command line one."""
        if self.SEED is not None:
            logger.info(f"Using seed {self.SEED} from SELECTION_LAB_SEED")
            return self.SEED
        return cli_seed

_settings = Settings()
