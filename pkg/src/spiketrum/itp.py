"""Intensity-to-place coding: codes to spikes on 120 channels, and back.

Every kernel owns three output channels, one per discrete intensity level.
A code becomes a single spike: the channel names the kernel and the level
nearest to |s|, the spike time is the segment start plus the (nonnegative,
clamped) shift. Spike trains serialize to a plain text event list or a
compact binary record stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .encoder import Code

DEFAULT_LEVELS = (0.0065, 0.4115, 25.8744)

_AER_MAGIC = b"SPKA"
_AER_VERSION = 1
_AER_HEADER = struct.Struct("<4sII d")
_AER_RECORD = struct.Struct("<QH")


class AerFormatError(ValueError):
    """Raised when a spike train file is malformed."""


@dataclass(frozen=True)
class ChannelMap:
    """Channel layout: kernel index major, intensity level minor."""

    levels: tuple = DEFAULT_LEVELS
    kernel_count: int = 40

    def __post_init__(self):
        if not all(a < b for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"levels must be strictly increasing: {self.levels}")
        if min(self.levels) <= 0:
            raise ValueError(f"levels must be positive: {self.levels}")

    @property
    def channels_per_kernel(self):
        return len(self.levels)

    @property
    def total_channels(self):
        return self.kernel_count * len(self.levels)


@dataclass(frozen=True)
class SpikeEvent:
    """One event: absolute sample time and output channel."""

    time: int
    channel: int


def channel_of(m, level, channel_map=ChannelMap()):
    """Channel id for kernel m at intensity level; bijective over the grid."""
    if not 0 <= m < channel_map.kernel_count:
        raise ValueError(f"kernel index {m} outside [0, {channel_map.kernel_count})")
    if not 0 <= level < channel_map.channels_per_kernel:
        raise ValueError(
            f"level {level} outside [0, {channel_map.channels_per_kernel})")
    return m * channel_map.channels_per_kernel + level


def quantize_intensity(s, channel_map=ChannelMap()):
    """Index of the level nearest to |s|, ties to the lower level.

    Implemented as the subtract-and-compare chain the selection reduces to
    in a datapath: pairwise comparisons of the absolute differences, with
    <= steering toward the lower index.
    """
    mag = abs(s)
    d0, d1, d2 = (abs(mag - c) for c in channel_map.levels)
    if d0 <= d1:
        return 0 if d0 <= d2 else 2
    return 1 if d1 <= d2 else 2


def codes_to_spikes(codes, channel_map, segment_len):
    """One spike per code, sorted by time then channel.

    The shift clamps to [0, segment_len) so the event never precedes its
    segment; the full signed shift survives only at the code level.
    """
    spikes = []
    for c in codes:
        offset = min(max(c.tau, 0), segment_len - 1)
        spikes.append(SpikeEvent(
            time=c.segment_index * segment_len + offset,
            channel=channel_of(c.m, quantize_intensity(c.s, channel_map),
                               channel_map)))
    spikes.sort(key=lambda e: (e.time, e.channel))
    return spikes


def spikes_to_codes(spikes, channel_map, segment_len):
    """Recover quantized codes from spikes; s becomes the level center value.

    Iteration numbers restart per segment in arrival order; they are not
    recoverable from the spike train.
    """
    per_kernel = channel_map.channels_per_kernel
    counters = {}
    codes = []
    for e in spikes:
        if not 0 <= e.channel < channel_map.total_channels:
            raise AerFormatError(
                f"channel {e.channel} outside [0, {channel_map.total_channels})")
        segment, tau = divmod(e.time, segment_len)
        iteration = counters.get(segment, 0)
        counters[segment] = iteration + 1
        codes.append(Code(m=e.channel // per_kernel, tau=tau,
                          s=channel_map.levels[e.channel % per_kernel],
                          segment_index=segment, iteration=iteration))
    return codes


def write_aer_text(spikes, path):
    """One `time,channel` line per event."""
    with open(path, "w") as fh:
        for e in spikes:
            fh.write(f"{e.time},{e.channel}\n")


def read_aer_text(path):
    spikes = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    time_s, channel_s = line.split(",")
                    spikes.append(SpikeEvent(int(time_s), int(channel_s)))
                except ValueError as exc:
                    raise AerFormatError(
                        f"bad event on line {lineno}: {line!r}") from exc
    except UnicodeDecodeError as exc:
        raise AerFormatError(
            f"binary content at byte {exc.start}; not a text spike file") from exc
    return spikes


def write_aer_binary(spikes, path, sample_rate, channel_count=120):
    """Header (magic, version, channel count, sample rate) then fixed records."""
    with open(path, "wb") as fh:
        fh.write(_AER_HEADER.pack(_AER_MAGIC, _AER_VERSION, channel_count,
                                  sample_rate))
        for e in spikes:
            fh.write(_AER_RECORD.pack(e.time, e.channel))


def read_aer_binary(path):
    """Returns (spikes, sample_rate, channel_count)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _AER_MAGIC:
        raise AerFormatError(f"bad magic {blob[:4]!r} at offset 0")
    if len(blob) < _AER_HEADER.size:
        raise AerFormatError(
            f"truncated header: {len(blob)} bytes, need {_AER_HEADER.size}")
    magic, version, channel_count, sample_rate = _AER_HEADER.unpack_from(blob)
    if version != _AER_VERSION:
        raise AerFormatError(f"unsupported version {version} at offset 4")
    body = len(blob) - _AER_HEADER.size
    if body % _AER_RECORD.size:
        raise AerFormatError(
            f"truncated record at offset {_AER_HEADER.size + body - body % _AER_RECORD.size}")
    spikes = []
    for off in range(_AER_HEADER.size, len(blob), _AER_RECORD.size):
        time, channel = _AER_RECORD.unpack_from(blob, off)
        if channel >= channel_count:
            raise AerFormatError(f"channel {channel} at offset {off} exceeds "
                                 f"declared count {channel_count}")
        spikes.append(SpikeEvent(time, channel))
    return spikes, sample_rate, channel_count


def read_aer(path):
    """Read either spike format, sniffing the binary magic.

    Returns (spikes, sample_rate or None, channel_count or None); the text
    format carries no header so its metadata comes back as None.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _AER_MAGIC:
        return read_aer_binary(path)
    spikes = read_aer_text(path)
    return spikes, None, None
