"""Echo state networks whose input and recurrent weights are trained by gradient descent."""

from .dataio import FrameDataset, gen_synthetic, load_frames, load_model, save_frames, save_model
from .estimator import EchoStateClassifier
from .gradcheck import fd_check_input, fd_check_recurrent, run_grid
from .gradients import compute_A, grad_input_case1, grad_input_case2, grad_recurrent
from .numkernel import NumericError, SparseMatrix, SparsePattern, sigmoid_map, solve_spd, spectral_radius
from .optimizer import FistaState, momentum_coefficient, update_weights
from .readout import build_design, cost, train_readout
from .reservoir import EsnConfig, ModelParams, forward_pass, init_network, renormalize_recurrent
from .trainer import LearnMode, TrainReport, evaluate, fit, run_epoch

__version__ = "0.1.0"

__all__ = [
    "EchoStateClassifier", "EsnConfig", "FistaState", "FrameDataset", "LearnMode", "ModelParams",
    "NumericError", "SparseMatrix", "SparsePattern", "TrainReport", "build_design", "compute_A",
    "cost", "evaluate", "fd_check_input", "fd_check_recurrent", "fit", "forward_pass",
    "gen_synthetic", "grad_input_case1", "grad_input_case2", "grad_recurrent", "init_network",
    "load_frames", "load_model", "momentum_coefficient", "renormalize_recurrent", "run_epoch",
    "run_grid", "save_frames", "save_model", "sigmoid_map", "solve_spd", "spectral_radius",
    "train_readout", "update_weights",
]
