"""Fixture CNN: two conv-BN-ReLU blocks, global pooling, linear head.

Roughly 30k parameters, small enough to train on a laptop CPU in about a
minute yet structured like the networks the consumer library targets.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from . import task


class FixtureCNN(nn.Module):
    def __init__(self, classes: int = task.NUM_CLASSES):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 32, 3, stride=1, padding=1)
        self.bn1 = nn.BatchNorm2d(32)
        self.conv2 = nn.Conv2d(32, 96, 3, stride=2, padding=1)
        self.bn2 = nn.BatchNorm2d(96)
        self.fc = nn.Linear(96, classes)

    def forward(self, x):
        x = torch.relu(self.bn1(self.conv1(x)))
        x = torch.relu(self.bn2(self.conv2(x)))
        x = x.mean(dim=(2, 3))
        return self.fc(x)


def train_fixture(train_x: np.ndarray, train_y: np.ndarray, seed: int = 0,
                  epochs: int = 6, batch_size: int = 128,
                  lr: float = 3e-3) -> FixtureCNN:
    torch.manual_seed(seed)
    model = FixtureCNN()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    x = torch.from_numpy(train_x)
    y = torch.from_numpy(train_y)
    n = x.shape[0]
    order_rng = np.random.default_rng(seed)
    model.train()
    for _ in range(epochs):
        order = torch.from_numpy(order_rng.permutation(n))
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            loss.backward()
            opt.step()
    model.eval()
    return model


@torch.no_grad()
def reestimate_bn(model: FixtureCNN, calib: np.ndarray) -> None:
    """Replace BN running stats with exact population moments over the
    calibration pool, one layer at a time so each BN sees its upstream
    layers already updated. Keeps the exported model at a fixed point of
    downstream recalibration."""
    model.eval()
    x = torch.from_numpy(calib)

    def assign(bn, acts):
        bn.running_mean.copy_(acts.mean(dim=(0, 2, 3)))
        bn.running_var.copy_(acts.var(dim=(0, 2, 3), unbiased=False))

    assign(model.bn1, model.conv1(x))
    assign(model.bn2, model.conv2(torch.relu(model.bn1(model.conv1(x)))))


@torch.no_grad()
def predict(model: FixtureCNN, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    model.eval()
    outs = [model(torch.from_numpy(images[lo:lo + batch_size])).numpy()
            for lo in range(0, images.shape[0], batch_size)]
    return np.concatenate(outs)


def accuracy(model: FixtureCNN, images: np.ndarray, labels: np.ndarray) -> float:
    return float((predict(model, images).argmax(axis=1) == labels).mean() * 100.0)
