"""Greedy matching pursuit over the kernel dictionary.

The input stream is cut into disjoint 696-sample segments. Each segment
is loaded into a 2048-sample working buffer (zeros past the segment) and
decomposed greedily: correlate the buffer against all kernels at all
circular lags, take the strongest response as a code (m, tau, s), subtract
s times the shifted kernel from the buffer, repeat. The spike rate knob is
simply the number of iterations allowed per segment, and an optional
feedback threshold stops early once responses become negligible.

Correlation is circular over the 2048 window, which makes each subtraction
an exact orthogonal projection: the residual energy drops by s**2 per
iteration. The transform path and the sliding-dot-product path compute the
same quantity and stay interchangeable.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernel_bank import FFT_SIZE

MAX_SHIFT = 1024  # shifter range: tau in [-1024, 1023]


@dataclass
class SegmentBuffer:
    """One 2048-sample working buffer; holds the residual during encoding."""

    data: np.ndarray
    segment_index: int = 0
    valid_samples: int = 0

    @classmethod
    def from_samples(cls, samples, segment_index=0, buffer_len=FFT_SIZE):
        """Load up to ``buffer_len`` samples into a fresh zero-padded buffer."""
        samples = np.asarray(samples, dtype=np.float64)
        if len(samples) > buffer_len:
            raise ValueError(f"{len(samples)} samples exceed buffer ({buffer_len})")
        data = np.zeros(buffer_len)
        data[: len(samples)] = samples
        return cls(data, segment_index, len(samples))


@dataclass(frozen=True)
class Code:
    """One matching pursuit result: kernel m shifted by tau, scaled by s."""

    m: int
    tau: int
    s: float
    segment_index: int = 0
    iteration: int = 0


@dataclass
class EncoderConfig:
    """Knobs for one encoding run.

    sps caps codes per segment; threshold below which a response stops the
    segment (0 disables feedback); path picks the correlation engine; fixed
    switches to the integer datapath emulation, given as (int_bits,
    frac_bits) of the 34-bit format.
    """

    sps: int = 16
    threshold: float = 0.0
    path: str = "fft"
    fixed: tuple[int, int] | None = None

    def __post_init__(self):
        if not 0 <= self.sps <= FFT_SIZE:
            raise ValueError(f"sps must be in [0, {FFT_SIZE}], got {self.sps}")
        if not (np.isfinite(self.threshold) and self.threshold >= 0):
            raise ValueError(f"threshold must be finite and >= 0, got {self.threshold}")
        if self.path not in ("direct", "fft"):
            raise ValueError(f"unknown correlation path {self.path!r}")


def segment_stream(samples, segment_len, buffer_len=FFT_SIZE):
    """Cut a sample stream into zero-padded working buffers.

    Returns ceil(len / segment_len) buffers; the last one is zero-padded
    and records how many samples were real. Empty input gives no buffers.
    """
    if segment_len < 1 or segment_len > buffer_len:
        raise ValueError(f"segment length {segment_len} outside [1, {buffer_len}]")
    samples = np.asarray(samples, dtype=np.float64)
    buffers = []
    for i in range(0, len(samples), segment_len):
        chunk = samples[i:i + segment_len]
        buffers.append(SegmentBuffer.from_samples(
            chunk, segment_index=i // segment_len, buffer_len=buffer_len))
    return buffers


def _circular_windows(data, length):
    """Contiguous (N, length) matrix whose row u is data circularly shifted by u."""
    ext = np.concatenate([data, data[: length - 1]])
    return np.ascontiguousarray(np.lib.stride_tricks.sliding_window_view(ext, length))


def correlate_direct(buffer, kernel):
    """Circular cross-correlation by sliding dot products.

    r[u] = sum_t data[(u + t) mod 2048] * kernel[t], for every lag u.
    """
    return _circular_windows(buffer.data, len(kernel.samples)) @ kernel.samples


def correlate_fft(buffer, kernel):
    """Same correlation through the frequency domain.

    Multiplying the buffer spectrum by the conjugate kernel spectrum and
    transforming back yields the circular correlation at every lag at once.
    """
    return np.fft.irfft(np.fft.rfft(buffer.data) * np.conj(kernel.spectrum),
                        n=FFT_SIZE)


def correlate_all_direct(buffer, bank):
    """Sliding-dot-product correlation against every kernel, one (40, 2048) pass."""
    windows = _circular_windows(buffer.data, bank.kernel_length)
    return (windows @ bank.samples_matrix.T).T


def correlate_all_fft(buffer, bank):
    """Transform-path correlation against every kernel at once."""
    spectrum = np.fft.rfft(buffer.data)
    return np.fft.irfft(spectrum[None, :] * bank.conj_spectra, n=FFT_SIZE, axis=1)


def find_best_code(correlations, segment_index=0, iteration=0):
    """Pick the strongest response over all kernels and lags.

    The winner maximizes |r|; s keeps its sign. Lags past 1023 wrap to
    negative shifts. Ties resolve to the smallest kernel index, then the
    smallest lag (row-major argmax order).
    """
    correlations = np.asarray(correlations)
    flat = int(np.argmax(np.abs(correlations)))
    m, u = divmod(flat, correlations.shape[1])
    tau = u if u < MAX_SHIFT else u - FFT_SIZE
    return Code(m, tau, float(correlations[m, u]), segment_index, iteration)


def subtract_component(buffer, kernel, tau, s):
    """Remove s times the kernel placed at circular lag tau, in place."""
    if abs(tau) > MAX_SHIFT:
        raise ValueError(f"tau {tau} outside [{-MAX_SHIFT}, {MAX_SHIFT}]")
    start = tau % FFT_SIZE
    idx = (start + np.arange(len(kernel.samples))) % FFT_SIZE
    buffer.data[idx] -= s * kernel.samples
    return buffer


def feedback_should_stop(code, threshold):
    """True when the response is too weak to keep encoding this segment."""
    return abs(code.s) < threshold


def encode_segment(buffer, bank, config):
    """Run matching pursuit on one buffer; mutates it into the residual.

    Stops after config.sps codes or on the first response below the
    feedback threshold, which is discarded rather than emitted, so every
    returned code satisfies |s| >= threshold.
    """
    correlate = correlate_all_fft if config.path == "fft" else correlate_all_direct
    codes = []
    for iteration in range(config.sps):
        code = find_best_code(correlate(buffer, bank),
                              buffer.segment_index, iteration)
        if feedback_should_stop(code, config.threshold):
            break
        subtract_component(buffer, bank.kernels[code.m], code.tau, code.s)
        codes.append(code)
    return codes


def _worker_count():
    raw = os.environ.get("SPIKETRUM_THREADS", "1")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ValueError(f"SPIKETRUM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, workers)


def encode_stream(samples, bank, config):
    """Encode a whole sample stream; returns all codes in segment order.

    Segments are independent, so with SPIKETRUM_THREADS > 1 they encode on
    a thread pool; results are concatenated in segment order either way and
    the output is identical for any worker count.
    """
    buffers = segment_stream(samples, bank.segment_length)
    if config.fixed is not None:
        from . import fixed_point  # deferred: fixed_point imports this module

        encode_one = lambda buf: fixed_point.encode_segment_fixed(buf, bank, config)
    else:
        encode_one = lambda buf: encode_segment(buf, bank, config)
    workers = _worker_count()
    if workers > 1 and len(buffers) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_segment = list(pool.map(encode_one, buffers))
    else:
        per_segment = [encode_one(buf) for buf in buffers]
    return [code for segment in per_segment for code in segment]


CSV_HEADER = ["segment", "iteration", "kernel", "tau", "intensity"]


def write_codes_csv(codes, path):
    """Write codes as CSV, intensities at 9 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for c in codes:
            writer.writerow([c.segment_index, c.iteration, c.m, c.tau, f"{c.s:.9g}"])


def read_codes_csv(path):
    """Read a code CSV written by :func:`write_codes_csv`."""
    codes = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected code CSV header {header!r}")
        for row in reader:
            seg, iteration, m, tau, s = row
            codes.append(Code(int(m), int(tau), float(s), int(seg), int(iteration)))
    return codes
