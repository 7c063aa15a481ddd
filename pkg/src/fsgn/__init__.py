"""Spatio-temporal MLP encoder-decoder for future skeleton sequence synthesis."""
from .control import ControlConfig, input_pipeline, lowpass, output_pipeline, rollout, time_control_in
from .data import (SkeletonSequence, SynthSpec, WindowSample, baseline_constant_velocity, baseline_zero_velocity,
                   load_sequence, make_windows, save_sequence, synth_motion)
from .evaluation import EvalReport, compare, evaluate, fsgn_predictor, run_ablation
from .model import (FsgnParams, MlpBlock, ModelConfig, block_forward, decode, encode, forward, init_params,
                    load_checkpoint, param_count, save_checkpoint)
from .numeric import affine, dct, idct, transpose
from .training import TrainConfig, adam_step, backward, frame_diff, loss_fsgn, mpjpe, train

__version__ = "0.1.0"
