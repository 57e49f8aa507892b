"""Sparse spike-train audio coding over a gammatone kernel dictionary.

Audio goes in, a spike train on 120 channels comes out, and the spike
train linearly reconstructs an approximation of the audio. The encoder
is greedy matching pursuit against 40 ERB-spaced gammatone kernels; the
spike rate, an early-stop threshold, the correlation engine, and a 34-bit
fixed-point emulation mode are all configurable.
"""

from .kernel_bank import (
    BankConfig,
    BankFormatError,
    Kernel,
    KernelBank,
    build_bank,
    erb_center_frequencies,
    generate_gammatone,
    load_bank,
    save_bank,
)
from .encoder import (
    Code,
    EncoderConfig,
    SegmentBuffer,
    encode_segment,
    encode_stream,
    read_codes_csv,
    segment_stream,
    write_codes_csv,
)
from .itp import (
    AerFormatError,
    ChannelMap,
    SpikeEvent,
    channel_of,
    codes_to_spikes,
    quantize_intensity,
    read_aer,
    spikes_to_codes,
    write_aer_binary,
    write_aer_text,
)
from .decoder import (
    encoding_report,
    reconstruct_from_codes,
    reconstruct_from_spikes,
    snr_db,
    sparsity_percent,
    spike_entropy,
)
from .fixed_point import (
    Q5_28,
    QFormat,
    encode_segment_fixed,
    parity_harness,
    parse_qformat,
    q_add,
    q_mul,
    to_fixed,
    to_float,
)

__version__ = "0.1.0"
