import numpy as np


def derive_seed(*keys: int) -> int:
    """Mix integer keys into one 63-bit seed, stable across platforms."""
    state = np.random.SeedSequence([abs(int(k)) for k in keys]).generate_state(2)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def as_generator(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
