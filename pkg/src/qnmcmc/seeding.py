"""Deterministic derivation of component seeds from one master seed."""
import numpy as np

# stream tags; append-only, changing them changes every derived result
INSTANCE = 0
QAOA_SAMPLES = 1
MADE_INIT = 2
MADE_TRAIN = 3
CHAIN = 4


def derive_seed(master_seed: int, *keys: int) -> int:
    """63-bit seed from ``(master_seed, *keys)`` via numpy's SeedSequence hashing."""
    words = np.random.SeedSequence([int(master_seed), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(words[0]) << 31) ^ int(words[1]))
