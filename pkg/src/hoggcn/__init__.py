"""Semi-supervised node classification with homophily-guided graph convolution."""
from .graph import (Graph, Split, generate_splits, generate_synthetic, homophily_ratio,
                    k_order_structure)
from .datasets import load_dataset, save_dataset
from .model import HogModel, ModelConfig
from .trainer import TrainReport, TrainSettings, run_protocol, sweep, train_one_split

__version__ = "0.1.0"
