from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .dataset import DEFAULT_GEOMETRY, Geometry, SubjectRecord, TrimodalDataset
from .formats import (
    assemble_dataset,
    export_dataset,
    load_dataset_dir,
    load_image_dataset,
    load_sequence_dataset,
    read_pgm,
    write_pgm,
    write_sequence_csv,
)
from .splits import (
    NormalizationStats,
    apply_normalization,
    fit_apply_normalization,
    fit_normalization,
    split_counts,
    split_dataset,
)
from .synthetic import generate_trimodal
