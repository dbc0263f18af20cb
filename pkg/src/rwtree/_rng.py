"""SplitMix64 counter-based hashing shared by both kernel backends.

Every random quantity attached to a tree node is a pure function of the
node's 64-bit key, so lazily expanding a tree in any order reproduces the
same environment.  The compiled core implements the identical recipe.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
STREAM_SALT = 0xD1B54A32D192ED03
ROOT_SALT = 0x5851F42D4C957F2D
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def unit(x: int) -> float:
    """Map 64 random bits to the open interval (0, 1]."""
    return (float(x >> 11) + 0.5) * INV_2_53


def root_key(seed: int) -> int:
    return mix64((seed & MASK64) ^ ROOT_SALT)


def child_key(parent_key: int, index: int) -> int:
    return mix64((parent_key + (index + 1) * GOLDEN) & MASK64)


def node_draw(key: int, j: int) -> float:
    """j-th uniform attached to the node with this key."""
    return unit(mix64(((key ^ STREAM_SALT) + (j + 1) * GOLDEN) & MASK64))


class SplitMix64:
    """Sequential stream used by the walker (one per walk seed)."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = mix64(seed & MASK64)

    def next_unit(self) -> float:
        self.state = (self.state + GOLDEN) & MASK64
        return unit(mix64(self.state))
