"""Simulator for decentralized federated learning over noisy channels (FedNDL1/2/3)."""
from .bounds import (BoundBreakdown, GateError, TheoremInputs, big_o_terms, estimate_B2, estimate_sigma2,
                     estimate_smoothness, fit_consensus_recursion, phi_constant, theorem_bound)
from .channel import NoiseSchedule, make_schedule, sample_noise
from .datagen import ClientShard, LossConfig, RegressionTask, evaluate_loss, generate_task, gradient, partition
from .engine import (ALGORITHMS, DivergenceError, LrSchedule, RunConfig, lr_at, run_experiment, step_fedndl1,
                     step_fedndl2, step_fedndl3)
from .metrics import MetricsRecord, aggregate, consensus_error, grad_norm_at_average
from .topology import MixingMatrix, TopologyKind, build_mixing_matrix, spectral_gap, validate_mixing

__version__ = "0.1.0"
