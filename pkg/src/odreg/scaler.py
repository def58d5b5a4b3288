"""Online mean-variance standardization with exponential forget.

A discounted variant of Welford's streaming moment recursion.  Columns on
the skip mask (intercept, dummies) are tracked but passed through unscaled.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_SD_FLOOR = 1e-8
_MAGIC = b"SCL\x00"
_VERSION = 1


@dataclass(frozen=True)
class ScalerState:
    """Running discounted moments of a covariate stream.

    ``variance = m2 / omega``; with ``gamma = 1`` the moments equal the
    plain batch mean and population variance.
    """

    mean: np.ndarray
    m2: np.ndarray
    omega: float
    gamma: float
    skip_mask: np.ndarray

    @property
    def width(self) -> int:
        return self.mean.shape[0]

    @property
    def variance(self) -> np.ndarray:
        if self.omega <= 0:
            return np.zeros_like(self.m2)
        return np.maximum(self.m2 / self.omega, 0.0)


def init_scaler(width: int, gamma: float = 1.0, skip_mask=None) -> ScalerState:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"forget factor must be in (0, 1], got {gamma}")
    if skip_mask is None:
        skip_mask = np.zeros(width, dtype=bool)
    skip_mask = np.asarray(skip_mask, dtype=bool)
    if skip_mask.shape != (width,):
        raise ValueError("skip mask width mismatch")
    return ScalerState(
        mean=np.zeros(width),
        m2=np.zeros(width),
        omega=0.0,
        gamma=float(gamma),
        skip_mask=skip_mask,
    )


def partial_fit(state: ScalerState, x: np.ndarray) -> ScalerState:
    """Absorb one row: ``omega' = gamma*omega + 1``, Welford mean/m2 update."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != state.width:
        raise ValueError(f"row has length {x.shape[0]}, expected {state.width}")
    if not np.all(np.isfinite(x)):
        raise ValueError("row contains non-finite entries")
    omega = state.gamma * state.omega + 1.0
    delta = x - state.mean
    mean = state.mean + delta / omega
    m2 = state.gamma * state.m2 + delta * (x - mean)
    return ScalerState(mean=mean, m2=m2, omega=omega, gamma=state.gamma, skip_mask=state.skip_mask)


def partial_fit_batch(state: ScalerState, X: np.ndarray) -> ScalerState:
    for row in np.atleast_2d(np.asarray(X, dtype=float)):
        state = partial_fit(state, row)
    return state


def transform(state: ScalerState, x: np.ndarray) -> np.ndarray:
    """Standardize a row (or matrix of rows); masked columns pass through."""
    if state.omega <= 0:
        raise ValueError("scaler has not absorbed any data")
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(state.variance)
    sd = np.maximum(sd, _SD_FLOOR)
    out = (x - state.mean) / sd
    if x.ndim == 1:
        out[state.skip_mask] = x[state.skip_mask]
    else:
        out[:, state.skip_mask] = x[:, state.skip_mask]
    return out


def inverse_transform(state: ScalerState, z: np.ndarray) -> np.ndarray:
    if state.omega <= 0:
        raise ValueError("scaler has not absorbed any data")
    z = np.asarray(z, dtype=float)
    sd = np.maximum(np.sqrt(state.variance), _SD_FLOOR)
    out = state.mean + sd * z
    if z.ndim == 1:
        out[state.skip_mask] = z[state.skip_mask]
    else:
        out[:, state.skip_mask] = z[:, state.skip_mask]
    return out


def scaler_to_bytes(state: ScalerState) -> bytes:
    j = state.width
    header = _MAGIC + struct.pack("<IQ", _VERSION, j)
    floats = np.concatenate(
        [
            np.ascontiguousarray(state.mean, dtype="<f8"),
            np.ascontiguousarray(state.m2, dtype="<f8"),
            np.array([state.omega, state.gamma], dtype="<f8"),
        ]
    )
    mask = np.packbits(state.skip_mask).tobytes()
    return header + floats.tobytes() + mask


def scaler_from_bytes(buf: bytes) -> ScalerState:
    if buf[:4] != _MAGIC:
        raise ValueError("bad magic in scaler snapshot")
    version, j = struct.unpack("<IQ", buf[4:16])
    if version != _VERSION:
        raise ValueError(f"unsupported scaler snapshot version {version}")
    nfloat = 2 * j + 2
    data = np.frombuffer(buf, dtype="<f8", offset=16, count=nfloat)
    mask_bytes = buf[16 + 8 * nfloat :]
    mask = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8), count=j).astype(bool)
    return ScalerState(
        mean=data[:j].copy(),
        m2=data[j : 2 * j].copy(),
        omega=float(data[2 * j]),
        gamma=float(data[2 * j + 1]),
        skip_mask=mask,
    )
