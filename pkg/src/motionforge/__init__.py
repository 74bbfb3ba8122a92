"""motionforge: probabilistic human-motion prediction at desk scale.

A learned per-frame pose embedding, a residual recurrent sequence decoder
conditioned on an encoded past and a sampled extrinsic factor, a dual-head
bidirectional discriminator that also regresses the extrinsic factor, and
the full adversarial training and evaluation stack - all over a small
self-contained reverse-mode autodiff engine.
"""

from .autodiff import ShapeError, Tensor, grad, no_grad
from .data import (FRAME_RATE, DataError, DatasetWindow, MotionSequence, SkeletonSpec,
                   load_sequence, load_sequences, make_windows, synth_dataset,
                   synth_motion, wrap_angles)
from .evaluation import (DEFAULT_HORIZONS_MS, ClassifierModel, HorizonReport, RBank,
                         classifier_score, critic_accuracy, euler_error, export_sequence,
                         horizon_to_frame, min_err_metric, model_critic, r_prime_metric,
                         run_ablation, train_action_classifier)
from .motion import (DiscriminatorOutput, GanDims, GanModel, critic_forward,
                     decode_sequence, discriminator_forward, encode_sequence, infer_r,
                     predict_motion, readout_indices)
from .nets import LstmSpec, MlpSpec, init_lstm, init_mlp, lstm_step, mlp_forward, run_bidirectional, run_sequence
from .params import Adam, ParameterStore, RandomSource, sample_normal
from .pose import (PoseAaeLosses, PoseModel, TrainingDiverged, decode_pose, encode_pose,
                   interpolate_poses, pose_cycle_losses, train_pose_embedding)
from .training import (GanTrainState, StepLosses, TrainConfig, disc_step, gen_step,
                       gradient_penalty, recursive_step, train)

__version__ = "0.1.0"
