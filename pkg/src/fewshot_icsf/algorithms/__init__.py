from .common import EpisodePrediction, JointModel, head_loss
from .finetune import baseline_adapt_evaluate, baseline_pretrain, init_baseline, label_inventory
from .fomaml import finetune_steps, fomaml_inner_finetune, fomaml_meta_step, fomaml_predict, zero_heads
from .loops import TrainLoopConfig, evaluate, evaluate_episode, init_params, predict_episode, train
from .prototypical import (
    PrototypeError,
    PrototypeSet,
    compute_prototypes,
    proto_episode_loss,
    proto_log_probs,
    proto_predict,
)
