"""Digital twin of an induction heating line and a PPO power controller."""
from .config import RunConfig, load_config
from .env import ForgingEnv
from .ppo import PpoConfig, evaluate, train

__all__ = ["RunConfig", "load_config", "ForgingEnv", "PpoConfig", "train", "evaluate"]
__version__ = "0.1.0"
