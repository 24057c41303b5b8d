"""Counter-based 64-bit random streams keyed by (seed, epoch, phase).

Each draw is a pure function of its key and an integer counter, so every
phase of every epoch can be replayed independently and the compiled kernel
reproduces the Python values bit for bit.
"""

from __future__ import annotations

MASK = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_U53 = 1.0 / 9007199254740992.0

# phase tags
ASSIGN = 0x61737369676E
NOISE = 0x6E6F697365
INSPECT = 0x696E7370656374
EXTRA_PICK = 0x65787472617069
EXTRA_NOISE = 0x65787472616E6F
CHUNKS = 0x6368756E6B73


def mix64(z: int) -> int:
    """SplitMix64 finaliser."""
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, epoch: int, tag: int) -> int:
    k = mix64(seed)
    k = mix64(k ^ ((epoch * GOLDEN) & MASK))
    return mix64(k ^ tag)


def draw(key: int, counter: int) -> int:
    return mix64(key + (counter + 1) * GOLDEN)


def uniform(key: int, counter: int) -> float:
    return (draw(key, counter) >> 11) * _U53


def below(key: int, counter: int, p) -> bool:
    """Bernoulli(p) draw; exact for p = 0 and p = 1."""
    return uniform(key, counter) < p


def randbelow(key: int, counter: int, m: int) -> int:
    return int(uniform(key, counter) * m)


class EpochStreams:
    """The per-phase keys of one epoch."""

    def __init__(self, seed: int, epoch: int):
        self.seed = seed
        self.epoch = epoch
        self.assign = stream_key(seed, epoch, ASSIGN)
        self.noise = stream_key(seed, epoch, NOISE)
        self.inspect = stream_key(seed, epoch, INSPECT)
        self.extra_pick = stream_key(seed, epoch, EXTRA_PICK)
        self.extra_noise = stream_key(seed, epoch, EXTRA_NOISE)
