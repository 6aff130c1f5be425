"""Source upsampling for CTC: token duplication (IT) or MASK insertion (IM)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

SCHEMES = ("it", "im")
MODES = ("fr", "dr")


@dataclass(frozen=True)
class UpsampleConfig:
    scheme: str = "im"
    ratio: Fraction = Fraction(4)
    mode: str = "dr"
    l_pos: int = 512

    def __post_init__(self):
        object.__setattr__(self, "ratio", to_fraction(self.ratio))
        object.__setattr__(self, "scheme", self.scheme.lower())
        object.__setattr__(self, "mode", self.mode.lower())
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ratio <= 0:
            raise ValueError("upsampling ratio must be positive")
        if self.l_pos < 1:
            raise ValueError("l_pos must be at least 1")


def to_fraction(value) -> Fraction:
    """Exact ratio from an int, Fraction, "a/b" string or decimal string.

    Floats go through their shortest repr so 2.56 becomes 64/25, not the
    binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass
class UpsampledSource:
    tokens: list[int]
    provenance: list[int]
    is_mask: list[bool]

    def __len__(self) -> int:
        return len(self.tokens)


def effective_ratio(src_len: int, cfg: UpsampleConfig) -> Fraction:
    if src_len < 1:
        raise ValueError("source length must be at least 1")
    if cfg.mode == "fr" or cfg.ratio * src_len <= cfg.l_pos:
        return cfg.ratio
    return Fraction(cfg.l_pos, src_len)


def insertion_index(j: int, s: Fraction, src_len: int) -> int:
    """Source index nearest to output position ``j``.

    Minimizes ``|j - (i+1)s + s/2|``; an exact tie sits on the boundary
    between two slots and goes to the later one, which is floor(j/s).
    """
    return min(math.floor(j / s), src_len - 1)


def upsample_tokens(x: Sequence[int], cfg: UpsampleConfig, mask_id: int) -> UpsampledSource:
    if len(x) == 0:
        raise ValueError("cannot upsample an empty source")
    s = effective_ratio(len(x), cfg)
    length = math.floor(s * len(x))
    if cfg.mode == "fr":
        length = min(length, cfg.l_pos)
    tokens, prov, masked = [], [], []
    prev = -1
    for j in range(length):
        i = insertion_index(j, s, len(x))
        dup = i == prev
        prev = i
        if cfg.scheme == "im" and dup:
            tokens.append(mask_id)
            masked.append(True)
        else:
            tokens.append(int(x[i]))
            masked.append(False)
        prov.append(i)
    return UpsampledSource(tokens, prov, masked)


def upsampled_length(src_len: int, cfg: UpsampleConfig) -> int:
    n = math.floor(effective_ratio(src_len, cfg) * src_len)
    return min(n, cfg.l_pos) if cfg.mode == "fr" else n


def softcopy(h: np.ndarray, s, tau: float) -> np.ndarray:
    """SoftCopy: ``out_j = sum_i softmax_i(-|j - i| / tau) h_i`` for j < floor(s|h|)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ValueError("h must be a non-empty (n, d) array")
    s = to_fraction(s)
    n_out = math.floor(s * h.shape[0])
    j = np.arange(n_out, dtype=np.float64)[:, None]
    i = np.arange(h.shape[0], dtype=np.float64)[None, :]
    logits = -np.abs(j - i) / tau
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w @ h


def softcopy_weights(n_src: int, s, tau: float) -> np.ndarray:
    return softcopy(np.eye(n_src), s, tau)
