"""BiLSTM-CNN/LSTM-CRF sequence tagging with a paired randomized-search toolkit."""
from .config import ConfigError, NetworkConfig
from .corpus import RawSentence, Sentence, TaggedCorpus, Vocabulary, build_corpus, read_conll
from .tagger import TaggerModel, build_model, load_checkpoint, predict, save_checkpoint
from .tagscheme import TagScheme, convert_scheme, entity_f1, extract_segments, repair_invalid
from .trainer import MtlConfig, TrainReport, train_multi, train_single

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "MtlConfig", "NetworkConfig", "RawSentence", "Sentence", "TagScheme",
    "TaggedCorpus", "TaggerModel", "TrainReport", "Vocabulary", "build_corpus", "build_model",
    "convert_scheme", "entity_f1", "extract_segments", "load_checkpoint", "predict", "read_conll",
    "repair_invalid", "save_checkpoint", "train_multi", "train_single",
]
