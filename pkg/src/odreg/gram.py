"""Weighted, exponentially discounted Gramian statistics.

The pair ``(G, H)`` with ``G = X'GammaWX`` and ``H = X'GammaWY`` summarizes an
entire (discounted, weighted) regression stream.  New observations are
absorbed by a cheap recursion, so least-squares and LASSO solutions can be
recomputed at any time without touching old rows.  ``InverseGramState``
maintains ``(X'GammaX)^{-1}`` directly via rank-one (Sherman-Morrison)
updates for the unregularized estimation mode.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import SingularUpdateError

_MAGIC = b"GRM\x00"
_VERSION = 1


@dataclass(frozen=True)
class GramState:
    """Sufficient statistics of a discounted, weighted least-squares stream.

    Attributes:
        G: Symmetric J x J cross-product matrix ``X'GammaWX``.
        H: Length-J moment vector ``X'GammaWY``.
        omega: Discounted weight mass ``sum_i gamma^(n-i) w_i``.
        n_seen: Number of absorbed rows.
        gamma: Forget factor in (0, 1].
    """

    G: np.ndarray
    H: np.ndarray
    omega: float
    n_seen: int
    gamma: float

    @property
    def width(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class InverseGramState:
    """Directly maintained inverse cross-product ``(X'GammaX)^{-1}``."""

    Ginv: np.ndarray
    gamma: float

    @property
    def width(self) -> int:
        return self.Ginv.shape[0]


def init_gram(width: int, gamma: float = 1.0) -> GramState:
    """Return an empty Gramian state for ``width`` features."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"forget factor must be in (0, 1], got {gamma}")
    if width < 1:
        raise ValueError("width must be positive")
    return GramState(
        G=np.zeros((width, width)),
        H=np.zeros(width),
        omega=0.0,
        n_seen=0,
        gamma=float(gamma),
    )


def _check_row(x: np.ndarray, width: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != width:
        raise ValueError(f"row has length {x.shape[0]}, expected {width}")
    if not np.all(np.isfinite(x)):
        raise ValueError("row contains non-finite entries")
    return x


def update_gram(state: GramState, x: np.ndarray, y: float, w: float = 1.0) -> GramState:
    """Absorb one weighted observation into the Gramian pair.

    Applies ``G' = gamma*G + w*x'x`` and ``H' = gamma*H + w*x'y``.  The input
    state is not modified.
    """
    x = _check_row(x, state.width)
    if not np.isfinite(y):
        raise ValueError("response is not finite")
    if not (np.isfinite(w) and w > 0):
        raise ValueError(f"weight must be positive and finite, got {w}")
    gamma = state.gamma
    G = gamma * state.G + w * np.outer(x, x)
    G = 0.5 * (G + G.T)
    H = gamma * state.H + (w * y) * x
    return GramState(
        G=G,
        H=H,
        omega=gamma * state.omega + w,
        n_seen=state.n_seen + 1,
        gamma=gamma,
    )


def discount_vector(gamma: float, n: int) -> np.ndarray:
    """Per-row discounts ``gamma^(n-1), ..., gamma^0`` (oldest first)."""
    if gamma == 1.0:
        return np.ones(n)
    return gamma ** np.arange(n - 1, -1, -1, dtype=float)


def update_gram_block(
    state: GramState, X: np.ndarray, y: np.ndarray, w: np.ndarray | float = 1.0
) -> GramState:
    """Absorb a block of ``t`` rows in one pass.

    Equivalent to ``t`` sequential :func:`update_gram` calls: old mass is
    discounted by ``gamma^t`` and row ``i`` of the block enters with discount
    ``gamma^(t-1-i)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    t = X.shape[0]
    if y.shape[0] != t:
        raise ValueError("X and y row counts differ")
    if X.shape[1] != state.width:
        raise ValueError(f"block has width {X.shape[1]}, expected {state.width}")
    w = np.broadcast_to(np.asarray(w, dtype=float), (t,)).copy()
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise ValueError("block contains non-finite entries")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    gamma = state.gamma
    f = discount_vector(gamma, t)
    fw = f * w
    G = gamma**t * state.G + (X * fw[:, None]).T @ X
    G = 0.5 * (G + G.T)
    H = gamma**t * state.H + X.T @ (fw * y)
    return GramState(
        G=G,
        H=H,
        omega=gamma**t * state.omega + float(fw.sum()),
        n_seen=state.n_seen + t,
        gamma=gamma,
    )


def gram_from_batch(
    X: np.ndarray, y: np.ndarray, w: np.ndarray | float = 1.0, gamma: float = 1.0
) -> GramState:
    """Build the Gramian state of a full batch in one shot."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return update_gram_block(init_gram(X.shape[1], gamma), X, y, w)


def init_inverse_gram(width: int, gamma: float = 1.0, scale: float = 1.0) -> InverseGramState:
    """Inverse state initialised to ``scale * I`` (a diffuse prior)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"forget factor must be in (0, 1], got {gamma}")
    return InverseGramState(Ginv=np.eye(width) * scale, gamma=float(gamma))


def inverse_from_gram(state: GramState) -> InverseGramState:
    """Rebuild the inverse directly from an accumulated Gramian."""
    return InverseGramState(Ginv=np.linalg.pinv(state.G), gamma=state.gamma)


def update_inverse_gram(
    state: InverseGramState, x: np.ndarray, w: float = 1.0
) -> InverseGramState:
    """Sherman-Morrison update of the discounted inverse cross-product.

    Returns ``(1/gamma) * (Ginv - (Ginv x' x Ginv) / (gamma/w + x Ginv x'))``.
    With ``gamma = 1`` and ``w = 1`` this is the plain recursive
    least-squares inverse update.

    Raises:
        SingularUpdateError: The denominator fell below 1e-12; rebuild with
            :func:`inverse_from_gram`.
    """
    x = _check_row(x, state.width)
    if not (np.isfinite(w) and w > 0):
        raise ValueError(f"weight must be positive and finite, got {w}")
    gamma = state.gamma
    gx = state.Ginv @ x
    denom = gamma / w + float(x @ gx)
    if denom < 1e-12:
        raise SingularUpdateError(f"rank-one update denominator {denom:.3e} below 1e-12")
    Ginv = (state.Ginv - np.outer(gx, gx) / denom) / gamma
    Ginv = 0.5 * (Ginv + Ginv.T)
    return InverseGramState(Ginv=Ginv, gamma=gamma)


def effective_sample_size(gamma: float, n: int | float) -> float:
    """Discounted observation count ``(1 - gamma^N) / (1 - gamma)``.

    Equals ``N`` exactly in the no-forget limit ``gamma = 1`` and approaches
    ``1 / (1 - gamma)`` for long streams.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"forget factor must be in (0, 1], got {gamma}")
    if n < 0:
        raise ValueError("observation count must be nonnegative")
    if gamma == 1.0:
        return float(n)
    return (1.0 - gamma**n) / (1.0 - gamma)


def gram_to_bytes(state: GramState) -> bytes:
    """Serialize to little-endian float64 payload with a 16-byte header."""
    j = state.width
    header = _MAGIC + struct.pack("<IQ", _VERSION, j)
    payload = np.concatenate(
        [
            np.ascontiguousarray(state.G, dtype="<f8").ravel(),
            np.ascontiguousarray(state.H, dtype="<f8"),
            np.array([state.omega, float(state.n_seen), state.gamma], dtype="<f8"),
        ]
    )
    return header + payload.tobytes()


def gram_from_bytes(buf: bytes) -> GramState:
    """Inverse of :func:`gram_to_bytes`; bit-exact for all float payloads."""
    if buf[:4] != _MAGIC:
        raise ValueError("bad magic in Gramian snapshot")
    version, j = struct.unpack("<IQ", buf[4:16])
    if version != _VERSION:
        raise ValueError(f"unsupported Gramian snapshot version {version}")
    expected = 16 + 8 * (j * j + j + 3)
    if len(buf) != expected:
        raise ValueError("Gramian snapshot has wrong length")
    data = np.frombuffer(buf, dtype="<f8", offset=16)
    G = data[: j * j].reshape(j, j).copy()
    H = data[j * j : j * j + j].copy()
    omega, n_seen, gamma = data[j * j + j :]
    return GramState(G=G, H=H, omega=float(omega), n_seen=int(n_seen), gamma=float(gamma))
