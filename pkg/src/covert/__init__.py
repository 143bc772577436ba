# Covert channel: shared secret, encoder/decoder, payload codecs, capacity model.
from src.covert.channel import (
    Capacity,
    CovertConfig,
    FactorPolicy,
    FactorValue,
    FixedFactor,
    ObservationLog,
    Phase,
    RMSFactor,
    ThresholdPolicy,
    capacity,
    compute_factor,
    cycle_means,
    decode,
    decode_prefix,
    embed_bits,
    select_positions,
    zero_back,
)
from src.covert.codecs import (
    Bitstream,
    bit_error_rate,
    decode_bitmap,
    decode_text,
    encode_bitmap,
    encode_text,
    hamming_distance,
    parse_bits,
    random_bits,
    read_pbm,
    read_text_payload,
    write_pbm,
    write_text_payload,
)

__all__ = [
    "Bitstream",
    "Capacity",
    "CovertConfig",
    "FactorPolicy",
    "FactorValue",
    "FixedFactor",
    "ObservationLog",
    "Phase",
    "RMSFactor",
    "ThresholdPolicy",
    "bit_error_rate",
    "capacity",
    "compute_factor",
    "cycle_means",
    "decode",
    "decode_bitmap",
    "decode_prefix",
    "decode_text",
    "embed_bits",
    "encode_bitmap",
    "encode_text",
    "hamming_distance",
    "parse_bits",
    "random_bits",
    "read_pbm",
    "read_text_payload",
    "select_positions",
    "write_pbm",
    "write_text_payload",
    "zero_back",
]
