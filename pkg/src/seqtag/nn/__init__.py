"""Layers with hand-derived forward and backward passes (64-bit numpy)."""
from .charenc import (
    CHAR_DIM, CHAR_LSTM_UNITS, CNN_FILTERS, char_bilstm_backward, char_bilstm_forward,
    char_cnn_backward, char_cnn_forward, init_char_bilstm, init_char_cnn,
)
from .crf import (
    NEG, crf_negative_log_likelihood, crf_viterbi, init_transitions, log_partition, path_score,
)
from .dense import dense_backward, dense_forward, dense_softmax, init_dense, softmax_cross_entropy
from .dropout import DROPOUT_KINDS, DROPOUT_RATES, DropoutSpec
from .functional import NonFiniteError, log_sum_exp, sigmoid, softmax
from .lstm import bilstm_backward, bilstm_forward, init_lstm, lstm_backward, lstm_forward, zero_lstm

__all__ = [
    "CHAR_DIM", "CHAR_LSTM_UNITS", "CNN_FILTERS", "DROPOUT_KINDS", "DROPOUT_RATES", "DropoutSpec",
    "NEG", "NonFiniteError", "bilstm_backward", "bilstm_forward", "char_bilstm_backward",
    "char_bilstm_forward", "char_cnn_backward", "char_cnn_forward", "crf_negative_log_likelihood",
    "crf_viterbi", "dense_backward", "dense_forward", "dense_softmax", "init_char_bilstm",
    "init_char_cnn", "init_dense", "init_lstm", "init_transitions", "log_partition",
    "log_sum_exp", "lstm_backward", "lstm_forward", "path_score", "sigmoid", "softmax",
    "softmax_cross_entropy", "zero_lstm",
]
