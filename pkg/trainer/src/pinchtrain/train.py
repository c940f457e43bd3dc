"""Unsupervised primal-dual training.

The primal step descends the Lagrangian loss over the network parameters;
once per epoch a dual step ascends it over the multiplier network, pushing
the learned beta_k(users, targets) up where the rate floor is violated and
back toward zero where it is slack.  No labels anywhere: the loss is built
from the forward pass itself.
"""

from __future__ import annotations

import argparse
import csv
import json
from dataclasses import dataclass

import numpy as np
import torch

from .forward import forward
from .model import GnnModel, MultiplierNet, export_weights
from .scenario import Scenario, load_scenario, sample_placements


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch and last finite losses."""


@dataclass
class TrainConfig:
    n_train: int = 256
    n_test: int = 64
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    dual_lr: float = 1e-3
    n_layers: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 0 or self.epochs < 1:
            raise ValueError("sample counts and epochs must be positive")
        if self.lr < 0 or self.dual_lr < 0 or self.batch_size < 1:
            raise ValueError("rates must be nonnegative, batch_size >= 1")


def lagrangian_loss(outputs: list, multipliers: list, scen: Scenario):
    """Mean over the batch of -[SR - sum_k beta_k (R_min - R_k)].

    With all multipliers zero this is minus the mean sensing rate; the
    multiplier term penalizes rate-floor violations and vanishes when every
    constraint is exactly tight.
    """
    terms = []
    for out, beta in zip(outputs, multipliers):
        viol = scen.R_min - out["rates"]
        terms.append(-(out["sr"] - (beta * viol).sum()))
    return torch.stack(terms).mean()


def _batch_metrics(outputs, scen: Scenario):
    srs = [float(o["sr"].detach()) for o in outputs]
    csrs = [float((o["rates"].detach() >= scen.R_min - 1e-9).to(torch.float64)
                  .mean()) for o in outputs]
    return float(np.mean(srs)), float(np.mean(csrs))


def train(config: TrainConfig, scen: Scenario, loss_csv: str | None = None):
    """Returns (model, multiplier_net, history rows)."""
    torch.manual_seed(config.seed)
    model = GnnModel(scen, n_layers=config.n_layers, seed=config.seed)
    dual = MultiplierNet(seed=config.seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    opt_dual = torch.optim.Adam(dual.parameters(), lr=config.dual_lr)

    data = sample_placements(scen, config.n_train, config.seed)
    rng = np.random.default_rng(config.seed + 7)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(config.n_train)
        epoch_losses = []
        epoch_outputs = []
        for lo in range(0, config.n_train, config.batch_size):
            batch = [data[i] for i in order[lo:lo + config.batch_size]]
            outputs = [forward(model, u, t, scen) for u, t in batch]
            multipliers = [dual(torch.from_numpy(u), torch.from_numpy(t))
                           for u, t in batch]
            loss = lagrangian_loss(outputs,
                                   [b.detach() for b in multipliers], scen)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; "
                    f"last losses {epoch_losses[-3:]}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
            epoch_outputs.extend(outputs)

        # one dual ascent step per epoch on the same Lagrangian
        batch = [data[i] for i in order[: config.batch_size]]
        with torch.no_grad():
            outputs = [forward(model, u, t, scen) for u, t in batch]
        multipliers = [dual(torch.from_numpy(u), torch.from_numpy(t))
                       for u, t in batch]
        # maximize the Lagrangian over the multiplier network: descending
        # its negation raises beta_k where the rate floor is violated
        dual_loss = -lagrangian_loss(outputs, multipliers, scen)
        opt_dual.zero_grad()
        dual_loss.backward()
        opt_dual.step()

        mean_sr, mean_csr = _batch_metrics(epoch_outputs, scen)
        history.append({"epoch": epoch, "loss": float(np.mean(epoch_losses)),
                        "mean_sr": mean_sr, "mean_csr": mean_csr})

    if loss_csv:
        with open(loss_csv, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["epoch", "loss", "mean_sr", "mean_csr"])
            writer.writeheader()
            writer.writerows(history)
    return model, dual, history


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="Train the inference network and export its weights")
    ap.add_argument("scenario", help="scenario JSON file")
    ap.add_argument("out", help="output weight document (JSON)")
    ap.add_argument("--loss-csv", default=None)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--n-train", type=int, default=256)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--layers", type=int, default=2)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--dual-lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    scen, _, _ = load_scenario(args.scenario)
    config = TrainConfig(n_train=args.n_train, epochs=args.epochs,
                         batch_size=args.batch_size, lr=args.lr,
                         dual_lr=args.dual_lr, n_layers=args.layers,
                         seed=args.seed)
    model, _, history = train(config, scen, loss_csv=args.loss_csv)
    with open(args.out, "w") as fh:
        json.dump(export_weights(model, provenance=f"pinchtrain seed={args.seed}"),
                  fh)
    print(f"trained {args.epochs} epochs; final loss {history[-1]['loss']:.4f}")


if __name__ == "__main__":
    main()
