"""Deterministic 64-bit seed derivation."""

MASK64 = (1 << 64) - 1

# stream ids
TRAIN = 0
TEST_CLEAN = 1
TEST_ATTACK = 2
CALIBRATION = 3
RANK_CLEAN = 4
RANK_ATTACK = 5


def _mix(z: int) -> int:
    # splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def split(master_seed: int, stream_id: int, index: int) -> int:
    """Per-run seed: three chained splitmix64 rounds over (master, stream, index).

    Each stage adds the golden-ratio increment before mixing, so distinct
    (stream, index) pairs land on unrelated 64-bit seeds.
    """
    gamma = 0x9E3779B97F4A7C15
    z = _mix((master_seed + gamma) & MASK64)
    z = _mix((z ^ stream_id) + gamma & MASK64)
    z = _mix((z ^ index) + gamma & MASK64)
    return z
