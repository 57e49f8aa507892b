"""Waveform reconstruction and encoding-quality metrics.

Reconstruction is linear superposition: each code contributes its scaled
kernel starting at the code's absolute position in the stream. The code
path uses the exact signed intensities; the spike path only knows each
code's quantized level, so it bounds the code path from below on SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel_bank import FFT_SIZE

SNR_CAP_DB = 300.0


def _place(out, start, waveform):
    """Add waveform into out at start, dropping samples outside the array."""
    lo = max(start, 0)
    hi = min(start + len(waveform), len(out))
    if lo < hi:
        out[lo:hi] += waveform[lo - start:hi - start]


def reconstruct_from_codes(codes, bank, output_length):
    """Sum of s * kernel(m) placed at segment_index * S + tau for each code.

    tau keeps its sign here; contributions falling outside the output
    range are dropped.
    """
    out = np.zeros(output_length)
    seg_len = bank.segment_length
    for c in codes:
        if not 0 <= c.m < bank.kernel_count:
            raise ValueError(f"kernel index {c.m} outside bank of {bank.kernel_count}")
        _place(out, c.segment_index * seg_len + c.tau, c.s * bank.kernels[c.m].samples)
    return out


def reconstruct_from_spikes(spikes, bank, channel_map, output_length):
    """Like reconstruct_from_codes with the channel's level as intensity.

    The spike time already encodes segment start plus clamped shift.
    """
    out = np.zeros(output_length)
    per_kernel = channel_map.channels_per_kernel
    for e in spikes:
        if not 0 <= e.channel < channel_map.total_channels:
            raise ValueError(
                f"channel {e.channel} outside [0, {channel_map.total_channels})")
        m = e.channel // per_kernel
        level = channel_map.levels[e.channel % per_kernel]
        _place(out, e.time, level * bank.kernels[m].samples)
    return out


def reconstruct_segment_window(codes, bank):
    """Circular reconstruction of one segment's 2048 window.

    Inverts the encoder exactly: adding these contributions back to the
    final residual reproduces the original buffer elementwise. Wrapped
    placements (negative tau) stay wrapped here, unlike the linear
    stream reconstruction.
    """
    out = np.zeros(FFT_SIZE)
    offsets = np.arange(bank.kernel_length)
    for c in codes:
        idx = (c.tau % FFT_SIZE + offsets) % FFT_SIZE
        out[idx] += c.s * bank.kernels[c.m].samples
    return out


def snr_db(original, reconstructed):
    """10 * log10(signal energy / error energy), capped at 300 dB."""
    original = np.asarray(original, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if original.shape != reconstructed.shape:
        raise ValueError(
            f"length mismatch: {original.shape} vs {reconstructed.shape}")
    signal = float(original @ original)
    if signal <= 0.0:
        raise ValueError("original signal has zero energy")
    error = original - reconstructed
    noise = float(error @ error)
    if noise == 0.0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(signal / noise), SNR_CAP_DB)


def spike_entropy(spikes, total_channels):
    """Shannon entropy in bits of the empirical channel-usage distribution."""
    if not spikes:
        return 0.0
    counts = np.zeros(total_channels)
    for e in spikes:
        counts[e.channel] += 1
    p = counts[counts > 0] / len(spikes)
    return float(-(p @ np.log2(p)))


def sparsity_percent(spikes, total_channels):
    """Percentage of channels that fired at least once."""
    if not spikes:
        return 0.0
    return 100.0 * len({e.channel for e in spikes}) / total_channels


@dataclass
class ReconstructionReport:
    """Reconstruction plus its headline numbers."""

    reconstructed: np.ndarray
    residual_energy: float
    snr_db: float
    code_count: int
    spike_count: int
    spikes_per_second: float


def encoding_report(samples, codes, spikes, bank, channel_map, sample_rate):
    """Quality summary of one encoding run as a JSON-ready dict.

    residual_energy is the energy the codes failed to capture, computed
    from the per-iteration energy decrements (each code removes exactly
    s**2 from its segment window). SNR keys are None when the input is
    silent, since the ratio is undefined.
    """
    samples = np.asarray(samples, dtype=np.float64)
    duration = len(samples) / sample_rate
    signal_energy = float(samples @ samples)
    captured = sum(c.s * c.s for c in codes)
    report = {
        "code_count": len(codes),
        "spike_count": len(spikes),
        "spikes_per_second": len(spikes) / duration if duration > 0 else 0.0,
        "residual_energy": max(signal_energy - captured, 0.0),
        "snr_code_db": None,
        "snr_spike_db": None,
        "entropy_bits": spike_entropy(spikes, channel_map.total_channels),
        "sparsity_percent": sparsity_percent(spikes, channel_map.total_channels),
    }
    if signal_energy > 0.0:
        recon_codes = reconstruct_from_codes(codes, bank, len(samples))
        recon_spikes = reconstruct_from_spikes(spikes, bank, channel_map,
                                               len(samples))
        report["snr_code_db"] = snr_db(samples, recon_codes)
        report["snr_spike_db"] = snr_db(samples, recon_spikes)
    return report
