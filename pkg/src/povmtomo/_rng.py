"""Seed handling for reproducible sampling.

All randomness in the package flows through Philox (counter-based) bit
generators keyed by ``SeedSequence([seed, *stream])``, so a given
``(seed, stream...)`` tuple reproduces the same draws bit-for-bit across
platforms and processes for a fixed numpy version.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Return a Philox generator for the stream ``(seed, *stream)``.

    ``seed`` is a nonnegative integer or a tuple of them; extra stream ids
    derive independent sub-streams (e.g. one per scaling trial) without
    consuming state from the parent stream. Generators pass through untouched.
    """
    if isinstance(seed, np.random.Generator):
        if stream:
            raise ValueError("cannot derive a sub-stream from a Generator; pass an integer seed")
        return seed
    if isinstance(seed, (tuple, list)):
        entropy = [int(s) for s in seed]
    else:
        entropy = [int(seed)]
    entropy.extend(int(s) for s in stream)
    if any(s < 0 for s in entropy):
        raise ValueError("seeds and stream ids must be nonnegative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``rows x cols`` isometry (V^dagger V = I_cols).

    QR of a complex Gaussian matrix with the R-diagonal phases folded into Q,
    which makes the distribution exactly Haar rather than merely orthonormal.
    """
    if not 1 <= cols <= rows:
        raise ValueError(f"need 1 <= cols <= rows, got {rows}x{cols}")
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))
    z *= np.sqrt(0.5)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))
