"""Local label propagation for semi-supervised embedding learning."""
from .bank import BankSnapshot, EmbeddingBank, new_bank, snapshot, update
from .config import ExperimentConfig, PropagationConfig, TrainSchedule
from .data import Dataset, make_blobs, make_rings, mask_labels, parse_dataset_spec
from .errors import ConfigurationError, ContractViolation, LLPError, PropagationError
from .evaluation import EvalReport, aggregation_metric, mds_coords, nn_classify
from .experiment import AblationCell, run_ablation_grid, run_experiment, run_supervised_baseline
from .losses import GradBundle, aggregation_loss, classification_loss, ir_loss, total_loss
from .model import MlpNetwork, backward, forward
from .neighbors import DensityTable, NeighborList, compute_density, knn
from .propagation import ClassWeights, LabelState, propagate_all, propagate_local, propagate_naive
from .softmax import SoftmaxContext, make_context, prob, prob_set
from .trainer import TrainReport, train, warmup

__all__ = [name for name in dir() if not name.startswith("_")]
