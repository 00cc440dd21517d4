"""Pure numpy Philox4x32-10, the fallback when the compiled kernel is absent.

Addressing: a stream is keyed by a 64-bit seed (the Philox key) and a 64-bit
stream id. Its n-th 64-bit output word lives in Philox block ``n >> 1``,
whose 128-bit counter is ``(block_lo, block_hi, stream_lo, stream_hi)``.
Even n takes output words (0, 1), odd n takes (2, 3), low word first.
Every word is therefore addressable without generating its predecessors.
"""
import numpy as np

M0 = 0xD2511F53
M1 = 0xCD9E8D57
W0 = 0x9E3779B9
W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF
TWO_M53 = 1.0 / 9007199254740992.0


def _rounds(c0, c1, c2, c3, k0, k1):
    # uint64 lanes holding 32-bit values; products fit exactly
    mask = np.uint64(MASK32)
    s32 = np.uint64(32)
    m0, m1 = np.uint64(M0), np.uint64(M1)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (p1 >> s32) ^ c1 ^ np.uint64(k0), p1 & mask, \
            (p0 >> s32) ^ c3 ^ np.uint64(k1), p0 & mask
        k0 = (k0 + W0) & MASK32
        k1 = (k1 + W1) & MASK32
    return c0, c1, c2, c3


def philox4x32(c0, c1, c2, c3, k0, k1):
    """One block: four 32-bit output words for a counter and key."""
    out = _rounds(*(np.array([v], dtype=np.uint64) for v in (c0, c1, c2, c3)), k0, k1)
    return tuple(int(v[0]) for v in out)


def words(key, stream, start, n):
    key, stream, start = int(key), int(stream), int(start)
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    first = start >> 1
    last = ((start + n - 1) % 2**64) >> 1
    nblocks = (last - first) % 2**63 + 1
    # block indices wrap at 2**63 when the word index wraps at 2**64
    blocks = (np.uint64(first) + np.arange(nblocks, dtype=np.uint64)) & np.uint64(2**63 - 1)
    mask = np.uint64(MASK32)
    zeros = np.zeros(nblocks, dtype=np.uint64)
    c0, c1, c2, c3 = _rounds(
        blocks & mask,
        blocks >> np.uint64(32),
        zeros + np.uint64(stream & MASK32),
        zeros + np.uint64(stream >> 32),
        key & MASK32,
        key >> 32,
    )
    pairs = np.empty((nblocks, 2), dtype=np.uint64)
    pairs[:, 0] = (c1 << np.uint64(32)) | c0
    pairs[:, 1] = (c3 << np.uint64(32)) | c2
    return pairs.reshape(-1)[(start & 1):(start & 1) + n].copy()


def uniforms(key, stream, start, n):
    w = words(key, stream, start, n)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * TWO_M53
