# Routes package
from mambayolo.config import Config


def resolve_seed(args, fallback: int = Config.DEFAULT_SEED) -> int:
    """--seed if given, else the fallback (MAMBAYOLO_SEED or a config's seed)."""
    return fallback if args.seed is None else args.seed
