"""Fixed deterministic random primitives for reproducible episode sampling.

The exact generator, the bounded-draw rule, and the selection rule are part
of the on-disk episode format: two builds of this library must produce
bit-identical episodes from the same (seed, index) pair on any platform.
Everything here is 64-bit integer arithmetic, so reproducibility does not
depend on the floating-point environment, the numpy version, or interpreter
hash randomization. The test suite pins known output vectors; changing
anything in this module silently changes every sampled episode.

Generator: SplitMix64. State advances by the 64-bit golden-ratio increment
and each output is the standard variant-13 finalizer. Bounded draws use
rejection sampling against the largest multiple of ``n`` below 2**64, so
they are exactly uniform. Subset selection is a Fisher-Yates prefix: swap a
uniformly chosen remaining item into each of the first ``k`` slots and keep
the prefix.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


def _finalize(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


_FOLD_PRIME = 0x100000001B3  # odd, so multiplication is a bijection mod 2**64


def derive_seed(base: int, *words: int) -> int:
    """Fold ``words`` into ``base``, producing a new 64-bit seed.

    Used to give every (seed, episode index, purpose) triple its own
    independent stream. The accumulated state is multiplied by an odd
    prime before each incoming word is mixed in, so the fold is a
    bijection in either argument and not symmetric: reordering the words
    (or swapping base with a word) yields a different seed.
    """
    state = _finalize((base + _GAMMA) & _MASK64)
    for w in words:
        state = _finalize(((state * _FOLD_PRIME) & _MASK64) ^ _finalize((w + _GAMMA) & _MASK64))
    return state


class SplitMix64:
    """Deterministic 64-bit pseudo-random generator (SplitMix64)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _finalize(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), rejection-sampled to avoid modulo bias."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n


def fisher_yates_prefix(rng: SplitMix64, items: Sequence[T], k: int) -> list[T]:
    """First ``k`` entries of a Fisher-Yates shuffle of ``items``.

    Equivalent to drawing ``k`` items without replacement, with the draw
    order fixed by ``rng``. ``items`` is not modified.
    """
    n = len(items)
    if not 0 <= k <= n:
        raise ValueError(f"cannot select {k} of {n} items")
    arr = list(items)
    for i in range(k):
        j = i + rng.below(n - i)
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:k]
