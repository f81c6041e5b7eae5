"""Counter-based random draws.

Every draw is a pure function of ``(seed, stream, counter...)``: SplitMix64
applied to a keyed counter.  Nothing is consumed, so the outcome of one
transmission attempt never depends on how many other draws happened before it.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / (1 << 53)

# stream identifiers
LOSS = 1
DRIFT = 2
PHASE = 3


def mix64(z):
    """SplitMix64 output function (a bijection on 64-bit words)."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(seed, *words):
    """Fold integer words into a 64-bit key for a sub-stream."""
    key = mix64(seed & MASK64)
    for w in words:
        key = mix64((key + GOLDEN * ((w & MASK64) + 1)) & MASK64)
    return key


def draw(key, counter):
    """Uniform float in [0, 1) for position ``counter`` of the stream ``key``."""
    return (mix64((key + GOLDEN * ((counter & MASK64) + 1)) & MASK64) >> 11) * _INV_2_53


def uniform(seed, *words):
    """One-shot uniform draw keyed by ``seed`` and arbitrary integer words."""
    *head, last = words
    return draw(derive_key(seed, *head), last)
