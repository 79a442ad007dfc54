import json
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict

import numpy as np
import torch
import torch.nn as nn

from cxr_report_trainer.core.errors import DataError, ShapeMismatch
from cxr_report_trainer.core.utils import make_rng

PARAM_NAMES = ("W1", "b1", "gamma", "beta", "running_mean", "running_var", "W2", "b2")


class LongitudinalProjection(nn.Module):
    """FC1 -> BN -> FC2 over concatenated [current, prior] tokens, width 2d."""

    def __init__(self, token_dim: int = 1024, eps: float = 1e-5):
        super(LongitudinalProjection, self).__init__()
        width = 2 * token_dim
        self.fc1 = nn.Linear(width, width)
        self.bn1 = nn.BatchNorm1d(width, eps=eps)
        self.fc2 = nn.Linear(width, width)
        self.double()
        # running statistics only; nothing here is trained
        self.eval()

    def forward(self, x):
        if x.dim() != 2 or x.size(1) != self.fc1.in_features:
            raise ShapeMismatch(
                f"Expected input to have shape (batch_size, {self.fc1.in_features}), "
                f"got {tuple(x.shape)}."
            )
        return self.fc2(self.bn1(self.fc1(x)))


@dataclass(frozen=True, eq=False)
class ProjectionParams:
    W1: np.ndarray
    b1: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in PARAM_NAMES:
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        width = self.b1.shape[0] if self.b1.ndim == 1 else -1
        if width <= 0 or width % 2:
            raise ShapeMismatch(f"Projection width must be even and positive, got {self.b1.shape}.")
        for name in ("W1", "W2"):
            if getattr(self, name).shape != (width, width):
                raise ShapeMismatch(
                    f"{name} has shape {getattr(self, name).shape}, expected ({width}, {width})."
                )
        for name in ("b1", "gamma", "beta", "running_mean", "running_var", "b2"):
            if getattr(self, name).shape != (width,):
                raise ShapeMismatch(
                    f"{name} has shape {getattr(self, name).shape}, expected ({width},)."
                )
        if np.any(self.running_var < 0):
            raise DataError("running_var entries must be non-negative.")
        if self.epsilon < 0:
            raise DataError("epsilon must be non-negative.")

    @property
    def width(self) -> int:
        return self.b1.shape[0]

    @property
    def token_dim(self) -> int:
        return self.width // 2

    @cached_property
    def module(self) -> LongitudinalProjection:
        model = LongitudinalProjection(self.token_dim, eps=self.epsilon)
        state = {
            "fc1.weight": self.W1,
            "fc1.bias": self.b1,
            "bn1.weight": self.gamma,
            "bn1.bias": self.beta,
            "bn1.running_mean": self.running_mean,
            "bn1.running_var": self.running_var,
            "fc2.weight": self.W2,
            "fc2.bias": self.b2,
        }
        state = {k: torch.from_numpy(v.copy()) for k, v in state.items()}
        state["bn1.num_batches_tracked"] = torch.tensor(0)
        model.load_state_dict(state)
        model.eval()
        return model

    def project(self, batch: np.ndarray) -> np.ndarray:
        """Apply f row-wise to an (n, 2d) array."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.width:
            raise ShapeMismatch(
                f"Expected input to have shape (n, {self.width}), got {batch.shape}."
            )
        with torch.no_grad():
            out = self.module(torch.from_numpy(np.ascontiguousarray(batch)))
        return out.numpy()

    @classmethod
    def identity(cls, token_dim: int, epsilon: float = 0.0) -> "ProjectionParams":
        width = 2 * token_dim
        zeros = np.zeros(width)
        return cls(
            W1=np.eye(width), b1=zeros, gamma=np.ones(width), beta=zeros,
            running_mean=zeros, running_var=np.ones(width),
            W2=np.eye(width), b2=zeros, epsilon=epsilon,
        )

    @classmethod
    def random(cls, token_dim: int, seed: int, epsilon: float = 1e-5) -> "ProjectionParams":
        """Reproducible initialization, scaled like nn.Linear's default."""
        rng = make_rng(seed)
        width = 2 * token_dim
        bound = 1.0 / np.sqrt(width)
        return cls(
            W1=rng.uniform(-bound, bound, size=(width, width)),
            b1=rng.uniform(-bound, bound, size=width),
            gamma=rng.uniform(0.5, 1.5, size=width),
            beta=rng.normal(0.0, 0.1, size=width),
            running_mean=rng.normal(0.0, 0.1, size=width),
            running_var=rng.uniform(0.5, 2.0, size=width),
            W2=rng.uniform(-bound, bound, size=(width, width)),
            b2=rng.uniform(-bound, bound, size=width),
            epsilon=epsilon,
        )

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"epsilon": self.epsilon}
        for name in PARAM_NAMES:
            array = getattr(self, name)
            record[name] = {"shape": list(array.shape), "data": array.ravel().tolist()}
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "ProjectionParams":
        arrays = {}
        for name in PARAM_NAMES:
            if name not in record:
                raise DataError(f"Projection parameter file lacks '{name}'.")
            entry = record[name]
            data = np.asarray(entry["data"], dtype=np.float64)
            shape = tuple(entry["shape"])
            if data.size != int(np.prod(shape)):
                raise ShapeMismatch(f"'{name}' holds {data.size} values for shape {shape}.")
            arrays[name] = data.reshape(shape)
        return cls(epsilon=float(record.get("epsilon", 1e-5)), **arrays)


def save_params(params: ProjectionParams, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(params.to_dict(), f)


def load_params(path: str) -> ProjectionParams:
    if not os.path.isfile(path):
        raise DataError(f"Projection parameter file {path} does not exist.")
    with open(path, "r") as f:
        return ProjectionParams.from_dict(json.load(f))


def mlp_forward(x, params: ProjectionParams) -> np.ndarray:
    """f(x) = FC2(BN(FC1(x))) with inference-mode normalization."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.width,):
        raise ShapeMismatch(f"Expected a vector of length {params.width}, got shape {x.shape}.")
    return params.project(x[None, :])[0]
