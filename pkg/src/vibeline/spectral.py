"""Fixed Fourier basis, STFT as correlation, sliding DFT, band energy maps.

The transform never calls an FFT: every window is correlated with an
explicit matrix of cosine / negative-sine rows (one pair per retained
bin, Nyquist excluded).  That keeps the arithmetic identical between the
batch path, the streaming path, and the tests' independent oracles.

All trig values whose phase is an exact quarter turn are snapped to
{-1, 0, 1}; floating-point pi makes np.cos(pi/2) a 6e-17 dust value
otherwise, and small-window bases are nicer to reason about when the
zeros are real zeros.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import UsSequence
from .errors import FormatError, SizeMismatchError, ValidationError

RATIO_EPS = 1e-12  # denominator guard: constant pixels score 0, not NaN

_COS_QUARTER = np.array([1.0, 0.0, -1.0, 0.0])
_SIN_QUARTER = np.array([0.0, 1.0, 0.0, -1.0])


def _cos_sin_exact(num, den: int):
    """cos / sin of 2*pi*num/den with exact values at quarter turns.

    num is an integer array (any sign); den a positive integer.
    """
    num = np.asarray(num, dtype=np.int64) % den
    ang = 2.0 * np.pi * num / den
    c = np.cos(ang)
    s = np.sin(ang)
    quad, rem = np.divmod(4 * num, den)
    exact = rem == 0
    quad = np.where(exact, quad, 0)  # keep the table index in range
    c = np.where(exact, _COS_QUARTER[quad], c)
    s = np.where(exact, _SIN_QUARTER[quad], s)
    return c, s


@dataclass(frozen=True)
class SpectralBasis:
    """Correlation kernels for one window length.

    rows[2k]   = cos(2*pi*n*k/N) over n = 0..N-1
    rows[2k+1] = -sin(2*pi*n*k/N)
    so correlating a window with the pair (2k, 2k+1) yields the real and
    imaginary parts of the standard forward DFT bin k.  k runs over
    0..floor(N/2)-1: the Nyquist bin is excluded.
    """

    window_len: int
    rows: np.ndarray = field(repr=False)

    @property
    def n_bins(self) -> int:
        return self.rows.shape[0] // 2

    def bin_freqs(self, fs: float) -> np.ndarray:
        """Center frequency of every retained bin in Hz."""
        return np.arange(self.n_bins) * float(fs) / self.window_len


def dft_basis(window_len: int) -> SpectralBasis:
    if window_len < 2:
        raise ValidationError(f"window_len must be >= 2, got {window_len}")
    n_bins = window_len // 2
    n = np.arange(window_len)
    rows = np.empty((2 * n_bins, window_len), dtype=np.float64)
    for k in range(n_bins):
        c, s = _cos_sin_exact(k * n, window_len)
        rows[2 * k] = c
        rows[2 * k + 1] = -s
    rows.setflags(write=False)
    return SpectralBasis(window_len=window_len, rows=rows)


def nearest_band(window_len: int, fs: float, target_freq: float) -> int:
    """Index of the non-DC bin whose center is closest to target_freq.

    Ties break toward the lower bin.  Requires at least one non-DC bin.
    """
    n_bins = window_len // 2
    if n_bins < 2:
        raise ValidationError(
            f"window_len={window_len} leaves no non-DC bin to target"
        )
    freqs = np.arange(1, n_bins) * float(fs) / window_len
    return 1 + int(np.argmin(np.abs(freqs - target_freq)))


@dataclass(frozen=True)
class Spectrogram:
    """K x M matrix of interleaved (real, imag) bin rows over M windows."""

    values: np.ndarray = field(repr=False)
    window_len: int = 0
    hop: int = 1

    @property
    def n_windows(self) -> int:
        return self.values.shape[1]

    def power(self) -> np.ndarray:
        """Per-bin squared magnitude, shape (n_bins, M)."""
        return self.values[0::2] ** 2 + self.values[1::2] ** 2


def window_count(length: int, window_len: int, hop: int) -> int:
    """Number of valid windows: floor((L - N) / hop) + 1."""
    return (length - window_len) // hop + 1


def stft(signal, window_len: int, hop: int = 1,
         basis: SpectralBasis | None = None) -> Spectrogram:
    """Rectangular-window STFT by correlation with the basis rows.

    Column m holds the DFT of samples[m*hop : m*hop + window_len].
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"signal must be 1-D, got shape {x.shape}")
    if hop < 1:
        raise ValidationError(f"hop must be >= 1, got {hop}")
    if x.size < window_len:
        raise ValidationError(
            f"signal length {x.size} shorter than window {window_len}"
        )
    if basis is None:
        basis = dft_basis(window_len)
    m = window_count(x.size, window_len, hop)
    starts = hop * np.arange(m)
    segs = x[starts[:, None] + np.arange(window_len)[None, :]]  # (M, N)
    values = segs @ basis.rows.T  # (M, 2K)
    return Spectrogram(values=np.ascontiguousarray(values.T),
                       window_len=window_len, hop=hop)


class SlidingDft:
    """O(bins) per-sample DFT of the trailing window (rectangular).

    Update per bin: X_k <- (X_k + x_new - x_oldest) * exp(+2j*pi*k/N).
    After at least N pushes the state equals the batch DFT of the last N
    samples (the ring starts zero-filled, so earlier states correspond to
    a zero-padded history).
    """

    def __init__(self, window_len: int):
        if window_len < 2:
            raise ValidationError(f"window_len must be >= 2, got {window_len}")
        self.window_len = window_len
        self.n_bins = window_len // 2
        c, s = _cos_sin_exact(np.arange(self.n_bins), window_len)
        self._rot = c + 1j * s
        self._ring = np.zeros(window_len, dtype=np.float64)
        self._pos = 0
        self.count = 0
        self.bins = np.zeros(self.n_bins, dtype=np.complex128)

    def push(self, sample: float) -> np.ndarray:
        """Absorb one sample; returns the current complex bin vector."""
        oldest = self._ring[self._pos]
        self._ring[self._pos] = sample
        self._pos = (self._pos + 1) % self.window_len
        self.count += 1
        self.bins = (self.bins + (sample - oldest)) * self._rot
        return self.bins

    def as_rows(self) -> np.ndarray:
        """Interleaved (real, imag) vector matching the stft row layout."""
        out = np.empty(2 * self.n_bins, dtype=np.float64)
        out[0::2] = self.bins.real
        out[1::2] = self.bins.imag
        return out


@dataclass(frozen=True)
class EnergyMap:
    """Per-pixel fraction of non-DC temporal power in the target bin."""

    values: np.ndarray = field(repr=False)
    target_bin: int = 0
    window_len: int = 0
    hop: int = 1
    fps: float = 0.0


def band_energy_from_frames(frames01: np.ndarray, fps: float, target_freq: float,
                            window_len: int = 10, hop: int = 1):
    """Core of band_energy_map, operating on float frames in [0, 1].

    frames01 has shape (T, H, W).  Returns (values, target_bin) where
    values is the H x W map: mean-over-windows power in the target bin
    divided by mean-over-windows total non-DC power (+ eps), clipped to
    [0, 1].  Each pixel's temporal mean is removed first; with a
    rectangular window and integer bins this cannot move non-DC bins, but
    it keeps the DC row itself bounded and is part of the definition.
    """
    if not (0 < target_freq < fps / 2):
        raise ValidationError(
            f"target_freq must lie in (0, fps/2)=(0, {fps / 2}), got {target_freq}"
        )
    t, h, w = frames01.shape
    if t < window_len:
        raise ValidationError(f"need at least {window_len} frames, got {t}")
    k_star = nearest_band(window_len, fps, target_freq)
    basis = dft_basis(window_len)
    z = frames01.reshape(t, h * w)
    z = z - z.mean(axis=0)
    m = window_count(t, window_len, hop)
    num = np.zeros(h * w, dtype=np.float64)
    den = np.zeros(h * w, dtype=np.float64)
    for j in range(m):
        seg = z[j * hop: j * hop + window_len]
        spec = basis.rows @ seg  # (2K, H*W)
        power = spec[0::2] ** 2 + spec[1::2] ** 2
        num += power[k_star]
        den += power[1:].sum(axis=0)
    values = (num / m) / (den / m + RATIO_EPS)
    np.clip(values, 0.0, 1.0, out=values)
    return values.reshape(h, w), k_star


def band_energy_map(seq: UsSequence, target_freq: float,
                    window_len: int = 10, hop: int = 1) -> EnergyMap:
    """Vibration-band energy ratio image for a whole sequence."""
    values, k_star = band_energy_from_frames(
        seq.frames_float(), seq.fps, target_freq, window_len, hop
    )
    return EnergyMap(values=values, target_bin=k_star,
                     window_len=window_len, hop=hop, fps=seq.fps)


# --------------------------------------------------------------------------
# VIBMAP01: small float-image container used for energy maps, spectrograms
# and Hough channels.
# --------------------------------------------------------------------------

VIBMAP_MAGIC = b"VIBMAP01"
_VIBMAP_HEADER = struct.Struct("<III")  # rows, cols, channels


def write_vibmap(path, array: np.ndarray) -> None:
    """Write a (rows, cols) or (channels, rows, cols) array as VIBMAP01.

    Data is stored as little-endian float32, channel-major then row-major.
    """
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValidationError(f"expected 2-D or 3-D array, got shape {arr.shape}")
    ch, rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(VIBMAP_MAGIC)
        fh.write(_VIBMAP_HEADER.pack(rows, cols, ch))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_vibmap(path) -> np.ndarray:
    """Read a VIBMAP01 file; always returns shape (channels, rows, cols)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(VIBMAP_MAGIC) or blob[: len(VIBMAP_MAGIC)] != VIBMAP_MAGIC:
        raise FormatError(f"{path}: not a VIBMAP01 file (bad magic)")
    off = len(VIBMAP_MAGIC)
    if len(blob) < off + _VIBMAP_HEADER.size:
        raise SizeMismatchError(f"{path}: truncated header")
    rows, cols, ch = _VIBMAP_HEADER.unpack_from(blob, off)
    off += _VIBMAP_HEADER.size
    need = rows * cols * ch * 4
    if len(blob) - off != need:
        raise SizeMismatchError(
            f"{path}: header promises {need} data bytes, file has {len(blob) - off}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols * ch, offset=off)
    return data.reshape(ch, rows, cols).copy()
