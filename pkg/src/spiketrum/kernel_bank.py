"""Gammatone kernel dictionary: generation, persistence, and spectra.

The encoder works against a fixed dictionary of 40 unit-norm gammatone
kernels whose center frequencies are spaced uniformly on the ERB-rate
scale. Each kernel is 1353 samples long at 16 kHz; correlation happens
in a 2048-sample window, so a 696-sample segment plus the kernel tail
exactly fills the window (2048 = 696 + 1353 - 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FFT_SIZE = 2048
DEFAULT_SAMPLE_RATE = 16000.0
DEFAULT_KERNEL_COUNT = 40
DEFAULT_KERNEL_LENGTH = 1353
DEFAULT_FMIN = 20.0
DEFAULT_FMAX = 8000.0
DEFAULT_ORDER = 4

# Glasberg-Moore ERB model constants.
_ERB_Q = 21.4
_ERB_SCALE = 4.37
_BANDWIDTH_FACTOR = 1.019

_BANK_MAGIC = b"SPKB"
_BANK_VERSION = 1
_HEADER = struct.Struct("<4sIII d d d I")


class BankFormatError(ValueError):
    """Raised when a kernel bank file is malformed."""


def erb_rate(freq_hz):
    """Map frequency in Hz to the ERB-rate (ERB-number) scale.

    Parameters
    ----------
    freq_hz : float or ndarray
        Frequency in Hz, nonnegative.

    Returns
    -------
    float or ndarray
        ERB-rate value, 21.4 * log10(4.37 * f / 1000 + 1).
    """
    return _ERB_Q * np.log10(_ERB_SCALE * np.asarray(freq_hz) / 1000.0 + 1.0)


def erb_rate_inverse(erb):
    """Invert :func:`erb_rate`, mapping ERB-rate back to Hz."""
    return (1000.0 / _ERB_SCALE) * (10.0 ** (np.asarray(erb) / _ERB_Q) - 1.0)


def erb_bandwidth(freq_hz):
    """Equivalent rectangular bandwidth in Hz at a given center frequency."""
    return 24.7 * (_ERB_SCALE * np.asarray(freq_hz) / 1000.0 + 1.0)


def erb_center_frequencies(count, fmin=DEFAULT_FMIN, fmax=DEFAULT_FMAX):
    """Center frequencies spaced uniformly on the ERB-rate scale.

    Parameters
    ----------
    count : int
        Number of frequencies, at least 2.
    fmin, fmax : float
        Endpoint frequencies in Hz, 0 < fmin < fmax.

    Returns
    -------
    ndarray
        ``count`` strictly increasing frequencies; the first is exactly
        ``fmin`` and the last exactly ``fmax``.
    """
    if count < 2:
        raise ValueError(f"need at least 2 center frequencies, got {count}")
    if not (0.0 < fmin < fmax):
        raise ValueError(f"invalid frequency range [{fmin}, {fmax}]")
    freqs = erb_rate_inverse(np.linspace(erb_rate(fmin), erb_rate(fmax), count))
    # pin the endpoints; the round trip through log10/power is not exact
    freqs[0] = fmin
    freqs[-1] = fmax
    return freqs


def generate_gammatone(fc, fs=DEFAULT_SAMPLE_RATE, length=DEFAULT_KERNEL_LENGTH,
                       order=DEFAULT_ORDER):
    """Generate one unit-norm gammatone kernel.

    The kernel is t^(order-1) * exp(-2*pi*b*ERB(fc)*t) * cos(2*pi*fc*t)
    sampled from t = 0, truncated at ``length`` samples, then scaled to
    unit L2 norm. Low center frequencies do not fully decay inside the
    window; the truncation is accepted and the normalization absorbs it.

    Parameters
    ----------
    fc : float
        Center frequency in Hz, 0 < fc < fs / 2.
    fs : float
        Sample rate in Hz.
    length : int
        Number of samples, at least 1.
    order : int
        Gammatone order, at least 1.

    Returns
    -------
    ndarray
        ``length`` float64 samples with L2 norm 1.0.
    """
    # inclusive upper bound: the default bank tops out exactly at Nyquist
    if not (0.0 < fc <= fs / 2.0):
        raise ValueError(f"center frequency {fc} Hz outside (0, {fs / 2.0}] Hz")
    if length < 1:
        raise ValueError(f"kernel length must be positive, got {length}")
    if order < 1:
        raise ValueError(f"gammatone order must be positive, got {order}")
    t = np.arange(length, dtype=np.float64) / fs
    envelope = t ** (order - 1) * np.exp(
        -2.0 * np.pi * _BANDWIDTH_FACTOR * erb_bandwidth(fc) * t)
    g = envelope * np.cos(2.0 * np.pi * fc * t)
    return g / np.linalg.norm(g)


@dataclass(frozen=True)
class Kernel:
    """One dictionary entry: waveform plus its cached half spectrum.

    ``spectrum`` holds the nonnegative-frequency half of the 2048-point
    transform of the zero-padded waveform (the waveform is real, so the
    negative half is redundant by conjugate symmetry).
    """

    index: int
    center_freq: float
    samples: np.ndarray
    spectrum: np.ndarray

    @classmethod
    def build(cls, index, center_freq, samples):
        spectrum = np.fft.rfft(samples, n=FFT_SIZE)
        return cls(index, float(center_freq), samples, spectrum)


@dataclass
class BankConfig:
    """Generation parameters for a kernel bank."""

    kernel_count: int = DEFAULT_KERNEL_COUNT
    kernel_length: int = DEFAULT_KERNEL_LENGTH
    sample_rate: float = DEFAULT_SAMPLE_RATE
    fmin: float = DEFAULT_FMIN
    fmax: float = DEFAULT_FMAX
    order: int = DEFAULT_ORDER


@dataclass(eq=False)
class KernelBank:
    """Immutable ordered collection of kernels with batched-access caches.

    Treat as read-only after construction; encoders on any number of
    threads may share one bank.
    """

    kernels: list[Kernel]
    sample_rate: float = DEFAULT_SAMPLE_RATE
    fmin: float = DEFAULT_FMIN
    fmax: float = DEFAULT_FMAX
    order: int = DEFAULT_ORDER
    samples_matrix: np.ndarray = field(init=False, repr=False)
    conj_spectra: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.samples_matrix = np.stack([k.samples for k in self.kernels])
        self.conj_spectra = np.conj(np.stack([k.spectrum for k in self.kernels]))

    @property
    def kernel_count(self):
        return len(self.kernels)

    @property
    def kernel_length(self):
        return len(self.kernels[0].samples)

    @property
    def segment_length(self):
        """Samples consumed per analysis window (window minus kernel tail)."""
        return FFT_SIZE - self.kernel_length + 1

    @property
    def center_frequencies(self):
        return np.array([k.center_freq for k in self.kernels])


def build_bank(config=None):
    """Build the kernel dictionary for a given configuration.

    Deterministic: identical configurations produce bit-identical banks.

    Parameters
    ----------
    config : BankConfig, optional
        Defaults to the standard 40-kernel bank, 20 Hz to 8 kHz at 16 kHz.

    Returns
    -------
    KernelBank
    """
    cfg = config or BankConfig()
    if cfg.fmax > cfg.sample_rate / 2.0:
        raise ValueError(
            f"fmax {cfg.fmax} Hz exceeds Nyquist {cfg.sample_rate / 2.0} Hz")
    if cfg.kernel_length > FFT_SIZE:
        raise ValueError(
            f"kernel length {cfg.kernel_length} exceeds window size {FFT_SIZE}")
    freqs = erb_center_frequencies(cfg.kernel_count, cfg.fmin, cfg.fmax)
    kernels = [
        Kernel.build(i, fc, generate_gammatone(
            fc, cfg.sample_rate, cfg.kernel_length, cfg.order))
        for i, fc in enumerate(freqs)
    ]
    return KernelBank(kernels, cfg.sample_rate, cfg.fmin, cfg.fmax, cfg.order)


def save_bank(bank, path):
    """Write a bank to its binary file format.

    Layout (little-endian): magic "SPKB", u32 version, u32 kernel count,
    u32 kernel length, f64 sample rate, f64 fmin, f64 fmax, u32 order,
    then per kernel one f64 center frequency followed by the f64 samples.
    Spectra are not stored; they are recomputed on load.
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_BANK_MAGIC, _BANK_VERSION, bank.kernel_count,
                              bank.kernel_length, bank.sample_rate,
                              bank.fmin, bank.fmax, bank.order))
        for kernel in bank.kernels:
            fh.write(struct.pack("<d", kernel.center_freq))
            fh.write(kernel.samples.astype("<f8").tobytes())


def load_bank(path):
    """Read a bank written by :func:`save_bank`.

    Raises
    ------
    BankFormatError
        On wrong magic, unsupported version, or truncation; the message
        names the failing byte offset.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _BANK_MAGIC:
        raise BankFormatError(f"bad magic {blob[:4]!r} at offset 0")
    if len(blob) < _HEADER.size:
        raise BankFormatError(
            f"truncated header: {len(blob)} bytes, need {_HEADER.size}")
    magic, version, count, length, rate, fmin, fmax, order = _HEADER.unpack_from(blob)
    if version != _BANK_VERSION:
        raise BankFormatError(f"unsupported version {version} at offset 4")
    offset = _HEADER.size
    record = 8 + 8 * length
    kernels = []
    for i in range(count):
        if offset + record > len(blob):
            raise BankFormatError(
                f"truncated kernel {i}: need {record} bytes at offset {offset}, "
                f"file has {len(blob) - offset}")
        (fc,) = struct.unpack_from("<d", blob, offset)
        samples = np.frombuffer(blob, dtype="<f8", count=length,
                                offset=offset + 8).copy()
        kernels.append(Kernel.build(i, fc, samples))
        offset += record
    if offset != len(blob):
        raise BankFormatError(
            f"{len(blob) - offset} trailing bytes at offset {offset}")
    return KernelBank(kernels, rate, fmin, fmax, order)
