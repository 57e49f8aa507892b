"""Intensity-to-place coding and spike file formats."""

import numpy as np
import pytest

from spiketrum import itp
from spiketrum.encoder import Code, EncoderConfig, SegmentBuffer, encode_segment


class TestChannelMap:
    def test_defaults(self, channel_map):
        assert channel_map.levels == itp.DEFAULT_LEVELS
        assert channel_map.channels_per_kernel == 3
        assert channel_map.total_channels == 120

    def test_levels_must_increase(self):
        with pytest.raises(ValueError):
            itp.ChannelMap(levels=(1.0, 1.0, 2.0))
        with pytest.raises(ValueError):
            itp.ChannelMap(levels=(-1.0, 0.5, 2.0))

    def test_channel_of(self, channel_map):
        assert itp.channel_of(0, 0, channel_map) == 0
        assert itp.channel_of(7, 1, channel_map) == 22
        assert itp.channel_of(39, 2, channel_map) == 119

    def test_channel_of_bijective(self, channel_map):
        seen = {itp.channel_of(m, level, channel_map)
                for m in range(40) for level in range(3)}
        assert seen == set(range(120))

    def test_channel_of_range_errors(self, channel_map):
        with pytest.raises(ValueError):
            itp.channel_of(40, 0, channel_map)
        with pytest.raises(ValueError):
            itp.channel_of(0, 3, channel_map)
        with pytest.raises(ValueError):
            itp.channel_of(-1, 0, channel_map)


class TestQuantizeIntensity:
    def test_level_values_map_to_themselves(self, channel_map):
        for idx, value in enumerate(channel_map.levels):
            assert itp.quantize_intensity(value, channel_map) == idx

    def test_examples(self, channel_map):
        assert itp.quantize_intensity(0.0, channel_map) == 0
        assert itp.quantize_intensity(0.3, channel_map) == 1
        assert itp.quantize_intensity(30.0, channel_map) == 2
        assert itp.quantize_intensity(-0.4, channel_map) == 1

    def test_exact_tie_goes_low(self, channel_map):
        # midpoint of the two small levels is representable exactly enough
        # that both distances compare equal in float64
        tie = 0.2090
        lo, hi = channel_map.levels[0], channel_map.levels[1]
        assert tie - lo == hi - tie
        assert itp.quantize_intensity(tie, channel_map) == 0

    def test_matches_argmin_brute_force(self, channel_map):
        rng = np.random.default_rng(30)
        levels = np.asarray(channel_map.levels)
        values = np.concatenate([
            rng.uniform(0, 30, 3000),
            rng.uniform(-30, 0, 3000),
            levels,
            (levels[:-1] + levels[1:]) / 2,
        ])
        for value in values:
            want = int(np.argmin(np.abs(abs(value) - levels)))
            assert itp.quantize_intensity(float(value), channel_map) == want


class TestCodesToSpikes:
    def test_single_code_example(self, channel_map):
        codes = [Code(m=7, tau=100, s=0.4, segment_index=3)]
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        assert spikes == [itp.SpikeEvent(time=3 * 696 + 100, channel=22)]

    def test_negative_tau_clamps_to_segment_start(self, channel_map):
        codes = [Code(m=0, tau=-50, s=1.0, segment_index=2)]
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        assert spikes[0].time == 2 * 696

    def test_large_tau_clamps_to_segment_end(self, channel_map):
        codes = [Code(m=0, tau=700, s=1.0, segment_index=0)]
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        assert spikes[0].time == 695

    def test_spike_count_matches_code_count(self, bank, channel_map):
        rng = np.random.default_rng(31)
        buf = SegmentBuffer.from_samples(rng.uniform(-1, 1, 696))
        codes = encode_segment(buf, bank, EncoderConfig(sps=16))
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        assert len(spikes) == len(codes)

    def test_sorted_by_time_then_channel(self, channel_map):
        codes = [
            Code(m=5, tau=10, s=0.5, segment_index=1),
            Code(m=2, tau=10, s=0.5, segment_index=1),
            Code(m=0, tau=600, s=0.5, segment_index=0),
        ]
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        keys = [(sp.time, sp.channel) for sp in spikes]
        assert keys == sorted(keys)
        assert spikes[0].time == 600

    def test_input_order_does_not_matter(self, channel_map):
        rng = np.random.default_rng(32)
        codes = [Code(m=int(rng.integers(40)), tau=int(rng.integers(696)),
                      s=float(rng.uniform(0.01, 1)), segment_index=int(rng.integers(4)))
                 for _ in range(50)]
        shuffled = list(codes)
        rng.shuffle(shuffled)
        assert itp.codes_to_spikes(codes, channel_map, 696) == \
            itp.codes_to_spikes(shuffled, channel_map, 696)

    def test_constant_tone_lands_on_one_channel_per_kernel(self, bank, channel_map):
        for m in (0, 19, 39):
            codes = [Code(m=m, tau=t, s=0.4115, segment_index=0)
                     for t in range(0, 600, 100)]
            spikes = itp.codes_to_spikes(codes, channel_map, 696)
            assert {sp.channel for sp in spikes} == {m * 3 + 1}


class TestSpikesToCodes:
    def test_inverse_on_clamp_free_codes(self, channel_map):
        codes = [
            Code(m=7, tau=100, s=0.4115, segment_index=3),
            Code(m=0, tau=0, s=0.0065, segment_index=0),
            Code(m=39, tau=695, s=25.8744, segment_index=1),
        ]
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        back = itp.spikes_to_codes(spikes, channel_map, 696)
        got = {(c.m, c.tau, c.s, c.segment_index) for c in back}
        want = {(c.m, c.tau, c.s, c.segment_index) for c in codes}
        assert got == want

    def test_intensity_snaps_to_level(self, channel_map):
        codes = [Code(m=4, tau=50, s=0.37, segment_index=0)]
        spikes = itp.codes_to_spikes(codes, channel_map, 696)
        back = itp.spikes_to_codes(spikes, channel_map, 696)
        assert back[0].s == 0.4115

    def test_iteration_counts_per_segment(self, channel_map):
        spikes = [
            itp.SpikeEvent(time=10, channel=0),
            itp.SpikeEvent(time=20, channel=5),
            itp.SpikeEvent(time=700, channel=9),
        ]
        back = itp.spikes_to_codes(spikes, channel_map, 696)
        assert [c.iteration for c in back] == [0, 1, 0]

    def test_channel_out_of_range(self, channel_map):
        with pytest.raises(itp.AerFormatError):
            itp.spikes_to_codes([itp.SpikeEvent(0, 120)], channel_map, 696)


def sample_spikes():
    return [
        itp.SpikeEvent(time=0, channel=0),
        itp.SpikeEvent(time=696, channel=22),
        itp.SpikeEvent(time=696, channel=97),
        itp.SpikeEvent(time=123456, channel=119),
    ]


class TestAerText:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "spikes.txt"
        itp.write_aer_text(sample_spikes(), path)
        assert itp.read_aer_text(path) == sample_spikes()

    def test_rewrite_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        itp.write_aer_text(sample_spikes(), a)
        itp.write_aer_text(itp.read_aer_text(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_empty(self, tmp_path):
        path = tmp_path / "none.txt"
        itp.write_aer_text([], path)
        assert itp.read_aer_text(path) == []

    def test_malformed_line_names_lineno(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0,0\n12,wat\n")
        with pytest.raises(itp.AerFormatError, match="line 2"):
            itp.read_aer_text(path)

    def test_binary_content_detected(self, tmp_path):
        path = tmp_path / "bin.txt"
        path.write_bytes(b"\xff\xfe\x00\x01")
        with pytest.raises(itp.AerFormatError, match="not a text spike file"):
            itp.read_aer_text(path)


class TestAerBinary:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "spikes.spka"
        itp.write_aer_binary(sample_spikes(), path, 16000.0)
        spikes, rate, channel_count = itp.read_aer_binary(path)
        assert spikes == sample_spikes()
        assert channel_count == 120
        assert rate == 16000.0

    def test_rewrite_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.spka", tmp_path / "b.spka"
        itp.write_aer_binary(sample_spikes(), a, 16000.0)
        spikes, rate, channel_count = itp.read_aer_binary(a)
        itp.write_aer_binary(spikes, b, rate, channel_count=channel_count)
        assert a.read_bytes() == b.read_bytes()

    def test_empty(self, tmp_path):
        path = tmp_path / "none.spka"
        itp.write_aer_binary([], path, 16000.0)
        spikes, _, _ = itp.read_aer_binary(path)
        assert spikes == []

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.spka"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(itp.AerFormatError, match="magic"):
            itp.read_aer_binary(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v9.spka"
        itp.write_aer_binary([], path, 16000.0)
        blob = bytearray(path.read_bytes())
        blob[4] = 9
        path.write_bytes(bytes(blob))
        with pytest.raises(itp.AerFormatError, match="version"):
            itp.read_aer_binary(path)

    def test_truncated_record_names_offset(self, tmp_path):
        path = tmp_path / "cut.spka"
        itp.write_aer_binary(sample_spikes(), path, 16000.0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(itp.AerFormatError, match=r"offset \d+"):
            itp.read_aer_binary(path)

    def test_channel_exceeding_declared_count(self, tmp_path):
        path = tmp_path / "over.spka"
        itp.write_aer_binary([itp.SpikeEvent(0, 119)], path,
                             16000.0, channel_count=64)
        with pytest.raises(itp.AerFormatError, match="channel"):
            itp.read_aer_binary(path)


class TestReadAerSniff:
    def test_dispatches_binary(self, tmp_path):
        path = tmp_path / "spikes.dat"
        itp.write_aer_binary(sample_spikes(), path, 16000.0)
        spikes, rate, channel_count = itp.read_aer(path)
        assert spikes == sample_spikes()
        assert (rate, channel_count) == (16000.0, 120)

    def test_dispatches_text(self, tmp_path):
        path = tmp_path / "spikes.txt"
        itp.write_aer_text(sample_spikes(), path)
        spikes, rate, channel_count = itp.read_aer(path)
        assert spikes == sample_spikes()
        assert rate is None and channel_count is None
