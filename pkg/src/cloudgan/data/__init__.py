from .pipeline import Prefetcher, ShowerDataset, ShuffleBatcher, prefetch, shuffle_batch
from .records import (
    MAGIC, BadMagicError, LengthCRCError, PayloadCRCError, PayloadFormatError, RecordError,
    TruncatedRecordError, crc32, decode_event, encode_event, read_records, write_records,
)
from .synth import ShowerEvent, ShowerParams, events_to_arrays, shower_axis_x, synth_dataset, synth_shower

__all__ = [
    "MAGIC", "BadMagicError", "LengthCRCError", "PayloadCRCError", "PayloadFormatError", "Prefetcher",
    "RecordError", "ShowerDataset", "ShowerEvent", "ShowerParams", "ShuffleBatcher", "TruncatedRecordError",
    "crc32", "decode_event", "encode_event", "events_to_arrays", "prefetch", "read_records", "shower_axis_x",
    "shuffle_batch", "synth_dataset", "synth_shower", "write_records",
]
