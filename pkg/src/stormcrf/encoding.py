"""Cumulative binary label codes for ordinal targets.

An ordinal label y in 1..K maps to K-1 bits where bit k (1-indexed) is 1
iff k < y, e.g. y=4, K=7 -> (1,1,1,0,0,0).  Valid codes are exactly the
monotone non-increasing bit strings; decoding counts the 1-bits.  Codes
are stored as length-(K-1) integer numpy arrays, so K is implied by the
code length (K = len(bits) + 1).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "encode_label",
    "encode_labels",
    "decode_label",
    "is_valid_code",
    "nearest_valid_code",
    "valid_codes",
]


def encode_label(y_raw: int, k: int) -> np.ndarray:
    """Encode one ordinal label in 1..k as its K-1 cumulative bits."""
    if k < 2:
        raise ValueError(f"cardinality K must be >= 2, got {k}")
    if not 1 <= y_raw <= k:
        raise ValueError(f"label {y_raw} outside 1..{k}")
    return (np.arange(1, k) < y_raw).astype(np.int8)


def encode_labels(labels, k: int) -> np.ndarray:
    """Encode an array of labels into an (N, K-1) bit matrix."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > k):
        raise ValueError(f"labels outside 1..{k}")
    if k < 2:
        raise ValueError(f"cardinality K must be >= 2, got {k}")
    return (np.arange(1, k)[None, :] < labels[:, None]).astype(np.int8)


def decode_label(code) -> int:
    """Map a valid code back to its label, 1 + number of 1-bits."""
    code = np.asarray(code)
    if not is_valid_code(code):
        raise ValueError(f"invalid code {code.tolist()}: a 0 is followed by a 1")
    return 1 + int(code.sum())


def is_valid_code(code) -> bool:
    """True iff the bits are monotone non-increasing (no 0 -> 1 step)."""
    code = np.asarray(code)
    if code.size < 2:
        return True
    return not np.any((code[:-1] == 0) & (code[1:] == 1))


def valid_codes(k: int) -> np.ndarray:
    """All K valid codes as a (K, K-1) matrix, row l-1 encoding label l."""
    return encode_labels(np.arange(1, k + 1), k)


def nearest_valid_code(code) -> np.ndarray:
    """Repair a code to the Hamming-nearest valid one.

    Ties break toward the smaller decoded label; valid inputs come back
    unchanged (they are at distance zero from themselves).
    """
    code = np.asarray(code)
    k = code.size + 1
    candidates = valid_codes(k)
    distances = np.abs(candidates - code).sum(axis=1)
    # argmin returns the first minimum, i.e. the smallest label.
    return candidates[int(np.argmin(distances))]
