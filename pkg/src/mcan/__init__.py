"""Mixed Category Attention Net (MCAN): tuple-compatibility learning for outfit recommendation."""

from .data import CategoryTaxonomy, Dataset, Item, Outfit, Pools, TupleSeq, load_dataset, save_dataset
from .evaluator import answer_fitb, auc, build_compat, build_fitb, compat_score, evaluate, fitb_accuracy, shuffle_eval
from .model import McanParams, ModelConfig, init_params, item_distribution, category_distribution, load_checkpoint, save_checkpoint
from .objectives import SamplingLevel, sample_negative, total_loss
from .recommender import Query, complete_outfit, recommend_category, recommend_item
from .syngen import GenConfig, generate
from .trainer import TrainConfig, train

__version__ = "0.1.0"
