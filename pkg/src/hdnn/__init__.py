"""hdnn: small-footprint highway-network training at desk scale.

Feedforward nets whose hidden layers mix a transformed signal with a
carried-through input via learned sigmoid gates (one tied gate pair for
the whole stack), trained with cross-entropy, teacher-student soft
targets, or a lattice-based expected-accuracy sequence objective, plus
gate-only adaptation.  Numeric kernels run through numba or pure numpy,
selected by the ``HDNN_BACKEND`` environment variable.
"""

from .errors import (CapacityError, ConfigError, ConsistencyError, DomainError,
                     FormatError, HdnnError, NumericError, ParameterError,
                     ShapeError, StructureError)
from .network import (ARCH_HIGHWAY, ARCH_PLAIN, GATES_ONLY, ForwardTrace, GateConfig,
                      ModelConfig, Parameters, ParamMask, backward, forward,
                      init_params, pack_weights, param_count)
from .losses import LossResult, TargetBatch, ce_loss, hybrid_loss, kl_loss, softmax
from .lattice import (Lattice, ReferencePath, SmbrResult, brute_force_smbr,
                      path_score, read_lattice, regularized_sequence_loss,
                      smbr_forward_backward, total_path_logscore, write_lattice)
from .training import (AdaptConfig, AdaptResult, EpochMetrics, FrameDataset,
                       MomentumState, TrainConfig, TrainResult, Utterance, adapt,
                       evaluate, sgd_step, train)
from .harness import (DatasetSpec, RunManifest, class_means, generate_synthetic,
                      generate_utterances, load_dataset, load_model, random_lattice,
                      save_dataset, save_model, shift_vector)

__version__ = "0.1.0"
