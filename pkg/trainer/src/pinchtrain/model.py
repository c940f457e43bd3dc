"""Network parameters and the portable weight-document export.

The layer topology, input widths and activation tags replicate the inference
package's documented contract, so an exported document loads there without
translation.  All parameters are float64: the parity contract between the
two runtimes is 1e-5 max abs and single precision would eat most of it.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

FORMAT_VERSION = 1
ACTIVATIONS = ("sigmoid", "tanh", "softplus", "identity")
FNN_NAMES = ("F_t", "F_r", "F_beta", "F_xi", "F_p", "F_V")

FNN_IN_DIMS = {"F_t": 7, "F_r": 3, "F_beta": 3, "F_p": 3, "F_xi": 6, "F_V": 4}
FNN_OUT_DIMS = {"F_t": 1, "F_r": 1, "F_beta": 1, "F_p": 1, "F_xi": 2, "F_V": 2}
HIDDEN = {"F_t": [], "F_r": [], "F_beta": [8, 8], "F_p": [8, 8],
          "F_xi": [8, 8], "F_V": [8, 8]}
HIDDEN_ACT = {"F_beta": "softplus", "F_p": "softplus", "F_xi": "tanh",
              "F_V": "softplus"}
OUT_ACT = {"F_t": "sigmoid", "F_r": "sigmoid", "F_beta": "softplus",
           "F_p": "softplus", "F_xi": "identity", "F_V": "identity"}

_TORCH_ACT = {
    "sigmoid": torch.sigmoid,
    "tanh": torch.tanh,
    "softplus": nn.functional.softplus,
    "identity": lambda x: x,
}


class Fnn(nn.Module):
    """Affine stages applied along the last axis, with tagged activations."""

    def __init__(self, name: str, rng: np.random.Generator):
        super().__init__()
        dims = [FNN_IN_DIMS[name]] + HIDDEN[name] + [FNN_OUT_DIMS[name]]
        self.activations = []
        self.stages = nn.ModuleList()
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            lin = nn.Linear(fan_in, fan_out, dtype=torch.float64)
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            with torch.no_grad():
                lin.weight.copy_(torch.from_numpy(
                    rng.normal(0.0, scale, (fan_out, fan_in))))
                lin.bias.zero_()
            self.stages.append(lin)
            last = i == len(dims) - 2
            self.activations.append(OUT_ACT[name] if last else HIDDEN_ACT[name])

    def forward(self, x):
        for lin, act in zip(self.stages, self.activations):
            x = _TORCH_ACT[act](lin(x))
        return x


class GnnModel(nn.Module):
    """All layers' FNNs, bound to one scenario's (S, M, N_t, N_r)."""

    def __init__(self, scen, n_layers: int = 2, seed: int = 0):
        super().__init__()
        self.n_layers = n_layers
        self.S, self.M = scen.S, scen.M
        self.N_t, self.N_r = scen.N_t, scen.N_r
        rng = np.random.default_rng(seed)
        self.layers = nn.ModuleList(
            nn.ModuleDict({name: Fnn(name, rng) for name in FNN_NAMES})
            for _ in range(n_layers))


def export_weights(model: GnnModel, provenance: str = "pinchtrain") -> dict:
    """Weight document in the portable JSON layout (format version 1)."""
    doc = {
        "format_version": FORMAT_VERSION,
        "n_layers": model.n_layers,
        "S": model.S, "M": model.M,
        "N_t": model.N_t, "N_r": model.N_r,
        "activations": list(ACTIVATIONS),
        "provenance": provenance,
        "bundles": {},
        "tensors": {},
    }
    for li, layer in enumerate(model.layers):
        for name in FNN_NAMES:
            fnn = layer[name]
            doc["bundles"][f"layer{li}/{name}"] = list(fnn.activations)
            for di, lin in enumerate(fnn.stages):
                w = lin.weight.detach().cpu().numpy()
                b = lin.bias.detach().cpu().numpy()
                doc["tensors"][f"layer{li}/{name}/w{di}"] = {
                    "shape": list(w.shape), "data": w.ravel().tolist()}
                doc["tensors"][f"layer{li}/{name}/b{di}"] = {
                    "shape": list(b.shape), "data": b.ravel().tolist()}
    return doc


class MultiplierNet(nn.Module):
    """Learned QoS multipliers beta_k(users, targets) >= 0.

    Set encoder: per-user embeddings plus mean-pooled user and target
    contexts feed a small head with a softplus output, so the outputs are
    equivariant over users and invariant over targets by construction.
    """

    def __init__(self, hidden: int = 16, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        kw = {"dtype": torch.float64}
        self.embed_u = nn.Sequential(
            nn.Linear(3, hidden, **kw), nn.Tanh(),
            nn.Linear(hidden, hidden, **kw), nn.Tanh())
        self.embed_t = nn.Sequential(
            nn.Linear(3, hidden, **kw), nn.Tanh(),
            nn.Linear(hidden, hidden, **kw), nn.Tanh())
        self.head = nn.Sequential(
            nn.Linear(3 * hidden, hidden, **kw), nn.Tanh(),
            nn.Linear(hidden, 1, **kw))

    def forward(self, users: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        eu = self.embed_u(users * 0.1)
        ctx_u = eu.mean(dim=0, keepdim=True).expand_as(eu)
        if targets.shape[0]:
            ctx_t = self.embed_t(targets * 0.1).mean(dim=0, keepdim=True)
        else:
            ctx_t = torch.zeros_like(ctx_u[:1])
        ctx_t = ctx_t.expand_as(eu)
        out = self.head(torch.cat([eu, ctx_u, ctx_t], dim=1))[:, 0]
        return nn.functional.softplus(out)
