"""Contact-map-masked transformer toolkit for protein superfamily classification.

The pipeline: parse tertiary structures (fixed-column PDB text), build
CA-CA contact maps, encode sequences plus masks into batches, and train a
transformer encoder whose self-attention is restricted to residue pairs
in contact. Everything runs on numpy; gradients come from the small
reverse-mode engine in :mod:`contactformer.autodiff`.
"""

__version__ = "0.1.0"

from .contacts import ContactMap, build_contact_map
from .data import Entry, LabelIndex, SplitManifest, batch_encode, stratified_split, tokenize
from .model import ModelConfig, count_parameters, encoder_forward, init_params
from .pdb_io import ChainStructure, check_completeness, parse_structure, residues_to_sequence
from .train import TrainConfig, evaluate, train

__all__ = [
    "ChainStructure",
    "ContactMap",
    "Entry",
    "LabelIndex",
    "ModelConfig",
    "SplitManifest",
    "TrainConfig",
    "batch_encode",
    "build_contact_map",
    "check_completeness",
    "count_parameters",
    "encoder_forward",
    "evaluate",
    "init_params",
    "parse_structure",
    "residues_to_sequence",
    "stratified_split",
    "tokenize",
    "train",
]
