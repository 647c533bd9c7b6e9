"""Depth-k classification trees learned by column generation over decision paths."""

from .dataset import Dataset, load_csv, split_train_test
from .driver import CghConfig, CghResult, evaluate, run_cgh
from .tree import DecisionPath, DecisionTree, Split

__all__ = ["CghConfig", "CghResult", "Dataset", "DecisionPath", "DecisionTree", "Split",
           "evaluate", "load_csv", "run_cgh", "split_train_test"]
__version__ = "0.1.0"
