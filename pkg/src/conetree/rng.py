"""Counter-based random streams keyed by (seed, sample index).

Draw number ``k`` of a stream depends only on the key, the purpose tag and
``k``, so a vertex's randomness is a function of its breadth-first index and
never of the order in which vertices are visited.
"""
import numpy as np

from .errors import MalformedInputError

DECORATIONS = 1
REALIZATION = 2

_U64 = 1 << 64


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < _U64:
        raise MalformedInputError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def stream(seed: int, sample_index: int, purpose: int, skip: int = 0) -> np.random.Generator:
    """Generator positioned at draw ``skip`` of the keyed stream."""
    key = [check_seed(seed), check_seed(sample_index)]
    bitgen = np.random.Philox(key=key, counter=[0, 0, 0, purpose])
    blocks, rest = divmod(skip, 4)
    if blocks:
        bitgen.advance(blocks)
    gen = np.random.Generator(bitgen)
    if rest:
        gen.random(rest)
    return gen


def vertex_uniforms(seed: int, sample_index: int, purpose: int, first: int, count: int,
                    width: int = 1) -> np.ndarray:
    """Uniforms on [0, 1) for vertices ``first..first+count-1``, ``width`` per vertex."""
    gen = stream(seed, sample_index, purpose, first * width)
    return gen.random((count, width))
