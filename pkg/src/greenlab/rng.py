"""Counter-based random streams.

All Monte-Carlo code in the package draws from Philox streams keyed by
(seed XOR purpose-salt, stream index).  Philox is counter-based, so two
streams with distinct keys are independent and a stream's output never
depends on how work was chunked across workers.  That is what makes
`--workers N` bit-reproducible: orbit i always reads the same uniforms,
no matter which thread computes it.

One uniform is consumed per backward branching step, drawn in blocks of
`n` per orbit via `uniform_block`.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# Purpose salts keep streams for different estimators disjoint even when
# the user passes the same seed everywhere.
SALT_SAMPLER = 0x53414D50
SALT_TRANSFER = 0x5452414E
SALT_BIRKHOFF = 0x4249524B
SALT_MISC = 0x4D495343


def stream(seed: int, salt: int, index: int) -> np.random.Generator:
    """Generator for stream `index` of purpose `salt` under `seed`."""
    key = [(int(seed) ^ int(salt)) & MASK64, int(index) & MASK64]
    return np.random.Generator(np.random.Philox(key=key))


def uniform_block(seed: int, salt: int, indices: np.ndarray, n: int) -> np.ndarray:
    """Uniforms of shape (len(indices), n); row i belongs to orbit indices[i].

    Row contents depend only on (seed, salt, index), never on the block
    boundaries, so chunked and monolithic calls agree bitwise.
    """
    out = np.empty((len(indices), n), dtype=np.float64)
    base = (int(seed) ^ int(salt)) & MASK64
    for row, idx in enumerate(indices):
        gen = np.random.Generator(np.random.Philox(key=[base, int(idx) & MASK64]))
        out[row] = gen.random(n)
    return out
