# Classifier, synthetic data and SGD training (model-core).
from src.model.dataset import Dataset, generate_dataset, partition_dataset
from src.model.mlp import evaluate, forward, init_params, loss_and_grad, predict, train_local
from src.model.spec import ModelSpec, ParamVector, stack_params

__all__ = [
    "Dataset",
    "ModelSpec",
    "ParamVector",
    "evaluate",
    "forward",
    "generate_dataset",
    "init_params",
    "loss_and_grad",
    "partition_dataset",
    "predict",
    "stack_params",
    "train_local",
]
