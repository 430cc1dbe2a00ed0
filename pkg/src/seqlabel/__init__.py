"""Character-aware BiLSTM-CRF sequence labelling on a small numpy autodiff engine."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .crf import CrfScores, brute_force_oracle, log_partition, nll_loss, score_sequence, viterbi_decode
from .data import TaggedSentence, Token, Vocabulary, kfold_split, load_embeddings, read_conll, write_conll
from .evaluation import EvalReport, extract_spans, span_micro_prf, token_accuracy
from .model import Tagger, TaggerConfig, build_tagger, tag_sentence
from .training import TrainSchedule, lr_at_epoch, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "CrfScores", "brute_force_oracle", "log_partition", "nll_loss", "score_sequence", "viterbi_decode",
    "TaggedSentence", "Token", "Vocabulary", "kfold_split", "load_embeddings", "read_conll", "write_conll",
    "EvalReport", "extract_spans", "span_micro_prf", "token_accuracy",
    "Tagger", "TaggerConfig", "build_tagger", "tag_sentence",
    "TrainSchedule", "lr_at_epoch", "train",
]
