"""Command-line surface: encode, decode, kernels, sweep, bench."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass

import numpy as np
from scipy.signal import chirp
from scipy.stats import spearmanr

from . import audio_io, decoder, encoder, itp, kernel_bank
from .fixed_point import parse_qformat


@dataclass
class RunConfig:
    """Resolved options for one command invocation."""

    input: str = None
    output: str = None
    sps: int = 16
    threshold: float = 0.0
    path: str = None
    fixed: object = None
    bank: str = None
    codes: str = None
    report: str = None
    length: int = None
    reference: str = None
    dump: str = None
    csv: str = None
    seconds: float = None
    amplitude: float = 0.5

    @classmethod
    def from_args(cls, args):
        cfg = cls(**{name: value for name, value in vars(args).items()
                     if name != "command"})
        if cfg.fixed is not None:
            cfg.fixed = parse_qformat(cfg.fixed)
            if cfg.path == "fft":
                raise ValueError("fixed-point mode uses the direct correlation "
                                 "path; drop --path fft")
            cfg.path = "direct"
        return cfg

    def encoder_config(self):
        fixed = (self.fixed.int_bits, self.fixed.frac_bits) if self.fixed else None
        return encoder.EncoderConfig(sps=self.sps, threshold=self.threshold,
                                     path=self.path or "fft", fixed=fixed)


def _load_bank(cfg):
    if cfg.bank:
        return kernel_bank.load_bank(cfg.bank)
    return kernel_bank.build_bank()


def _write_spikes(spikes, path, bank, channel_map):
    if path.endswith(".spka"):
        itp.write_aer_binary(spikes, path, bank.sample_rate,
                             channel_map.total_channels)
    else:
        itp.write_aer_text(spikes, path)


def cmd_encode(cfg):
    bank = _load_bank(cfg)
    samples, _ = audio_io.read_wav(cfg.input, expected_rate=bank.sample_rate)
    codes = encoder.encode_stream(samples, bank, cfg.encoder_config())
    channel_map = itp.ChannelMap(kernel_count=bank.kernel_count)
    spikes = itp.codes_to_spikes(codes, channel_map, bank.segment_length)
    _write_spikes(spikes, cfg.output, bank, channel_map)
    if cfg.codes:
        encoder.write_codes_csv(codes, cfg.codes)
    if cfg.report:
        report = decoder.encoding_report(samples, codes, spikes, bank,
                                         channel_map, bank.sample_rate)
        with open(cfg.report, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    duration = len(samples) / bank.sample_rate
    per_second = len(spikes) / duration if duration > 0 else 0.0
    print(f"{len(spikes)} spikes ({per_second:.1f} per second)")
    return 0


def cmd_decode(cfg):
    bank = _load_bank(cfg)
    if cfg.input.endswith(".spka"):
        spikes, file_rate, _ = itp.read_aer_binary(cfg.input)
    else:
        spikes, file_rate, _ = itp.read_aer(cfg.input)
    if file_rate is not None and file_rate != bank.sample_rate:
        raise ValueError(f"spike file rate {file_rate:g} Hz does not match "
                         f"bank rate {bank.sample_rate:g} Hz")
    channel_map = itp.ChannelMap(kernel_count=bank.kernel_count)
    reference = None
    if cfg.reference:
        reference, _ = audio_io.read_wav(cfg.reference,
                                         expected_rate=bank.sample_rate)
    if cfg.length is not None:
        length = cfg.length
    elif reference is not None:
        length = len(reference)
    elif spikes:
        length = max(e.time for e in spikes) + bank.kernel_length
    else:
        raise ValueError("empty spike train: give --length for the output size")
    recon = decoder.reconstruct_from_spikes(spikes, bank, channel_map, length)
    audio_io.write_wav(cfg.output, recon, bank.sample_rate)
    report = {"spike_count": len(spikes), "output_samples": length,
              "snr_db": None}
    if reference is not None:
        span = min(len(reference), length)
        report["snr_db"] = decoder.snr_db(reference[:span], recon[:span])
        print(f"snr: {report['snr_db']:.2f} dB over {span} samples")
    if cfg.report:
        with open(cfg.report, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    print(f"wrote {length} samples from {len(spikes)} spikes")
    return 0


def cmd_kernels(cfg):
    bank = kernel_bank.build_bank()
    kernel_bank.save_bank(bank, cfg.output)
    if cfg.dump:
        with open(cfg.dump, "w") as fh:
            fh.write("kernel,center_freq_hz,sample,amplitude\n")
            for kernel in bank.kernels:
                for i, value in enumerate(kernel.samples):
                    fh.write(f"{kernel.index},{kernel.center_freq:.6f},"
                             f"{i},{value:.9g}\n")
    print(f"saved {bank.kernel_count} kernels to {cfg.output}")
    return 0


def cmd_sweep(cfg):
    bank = _load_bank(cfg)
    rate = bank.sample_rate
    duration = 5.0
    t = np.arange(int(duration * rate)) / rate
    samples = cfg.amplitude * chirp(t, f0=bank.fmin, f1=bank.fmax,
                                    t1=duration, method="logarithmic")
    config = encoder.EncoderConfig(sps=1, threshold=0.0, path="fft")
    codes = encoder.encode_stream(samples, bank, config)
    channel_map = itp.ChannelMap(kernel_count=bank.kernel_count)
    spikes = itp.codes_to_spikes(codes, channel_map, bank.segment_length)
    if cfg.output:
        _write_spikes(spikes, cfg.output, bank, channel_map)
    if cfg.csv:
        with open(cfg.csv, "w") as fh:
            fh.write("segment_time,winning_kernel\n")
            for code in codes:
                seg_time = code.segment_index * bank.segment_length / rate
                fh.write(f"{seg_time:.6f},{code.m}\n")
    winners = [code.m for code in codes]
    rho = spearmanr(np.arange(len(winners)), winners).correlation
    print(f"{len(winners)} segments, rank correlation (time vs kernel): "
          f"{rho:.4f}")
    return 0


def cmd_bench(cfg):
    bank = _load_bank(cfg)
    if cfg.seconds is None or cfg.seconds <= 0:
        raise ValueError("no input: give --seconds > 0 for the corpus size")
    rng = np.random.default_rng(0)
    samples = 0.5 * rng.uniform(-1.0, 1.0, int(cfg.seconds * bank.sample_rate))
    segments = -(-len(samples) // bank.segment_length)
    realtime = bank.sample_rate / bank.segment_length
    paths = (cfg.path,) if cfg.path else ("direct", "fft")
    for path in paths:
        config = encoder.EncoderConfig(sps=cfg.sps, threshold=0.0, path=path)
        start = time.perf_counter()
        encoder.encode_stream(samples, bank, config)
        elapsed = time.perf_counter() - start
        throughput = segments / elapsed
        verdict = "met" if throughput >= realtime else "not met"
        print(f"{path}: {throughput:.2f} segments/s at sps {cfg.sps} "
              f"(real-time needs {realtime:.2f}: {verdict})")
    return 0


_HANDLERS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "kernels": cmd_kernels,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spiketrum",
        description="Sparse spike-train audio coding over a gammatone "
                    "kernel dictionary.")
    sub = parser.add_subparsers(dest="command", required=True)

    encode = sub.add_parser("encode", help="encode a WAV file to spikes")
    encode.add_argument("input", help="mono 16-bit PCM WAV at the bank rate")
    encode.add_argument("-o", "--output", required=True,
                        help="spike train out (.spka binary, anything else text)")
    encode.add_argument("--sps", type=int, default=16,
                        help="max spikes per segment (default 16)")
    encode.add_argument("--threshold", type=float, default=0.0,
                        help="feedback stop threshold on |s| (0 disables)")
    encode.add_argument("--path", choices=("direct", "fft"),
                        help="correlation engine (default fft)")
    encode.add_argument("--fixed", metavar="Q<I>.<F>",
                        help="fixed-point mode in the given 34-bit format")
    encode.add_argument("--bank", help="kernel bank file (default: built in)")
    encode.add_argument("--codes", help="also write the code list CSV here")
    encode.add_argument("--report", help="write a quality report JSON here")

    decode = sub.add_parser("decode", help="reconstruct a WAV from spikes")
    decode.add_argument("input", help="spike train (text or .spka binary)")
    decode.add_argument("-o", "--output", required=True, help="WAV out")
    decode.add_argument("--bank", help="kernel bank file (default: built in)")
    decode.add_argument("--length", type=int,
                        help="output length in samples (default: inferred)")
    decode.add_argument("--reference", help="original WAV for SNR reporting")
    decode.add_argument("--report", help="write a report JSON here")

    kernels = sub.add_parser("kernels", help="build and save the kernel bank")
    kernels.add_argument("-o", "--output", required=True, help="bank file out")
    kernels.add_argument("--dump", help="also write kernel waveforms CSV here")

    sweep = sub.add_parser("sweep",
                           help="log-sweep characterization at 1 spike/segment")
    sweep.add_argument("-o", "--output", help="spike train out")
    sweep.add_argument("--csv", help="write (segment_time, winning_kernel) here")
    sweep.add_argument("--amplitude", type=float, default=0.5,
                       help="sweep amplitude, full scale = 1 (default 0.5)")
    sweep.add_argument("--bank", help="kernel bank file (default: built in)")

    bench = sub.add_parser("bench", help="throughput check on synthetic noise")
    bench.add_argument("--seconds", type=float, default=5.0,
                       help="corpus length in seconds (default 5)")
    bench.add_argument("--sps", type=int, default=16,
                       help="max spikes per segment (default 16)")
    bench.add_argument("--path", choices=("direct", "fft"),
                       help="bench one engine (default: both)")
    bench.add_argument("--bank", help="kernel bank file (default: built in)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return _HANDLERS[args.command](cfg)
    except (ValueError, OSError) as exc:
        message = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
