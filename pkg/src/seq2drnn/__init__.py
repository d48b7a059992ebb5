"""Sequence-to-tree translation with doubly-recurrent tree decoders."""

from .config import DecodeLimits, TrainConfig
from .model import TranslationModel, make_example
from .treebank import TreeNode, parse_brackets, serialize

__all__ = ["DecodeLimits", "TrainConfig", "TranslationModel", "TreeNode", "make_example", "parse_brackets", "serialize"]
__version__ = "0.1.0"
