"""Monte-Carlo evaluation of the optimizer, the learned network and baselines."""

from __future__ import annotations

import hashlib
import io
import json
import time
from dataclasses import dataclass

import numpy as np

from .ao import AoConfig, run_alternating_optimization
from .baselines import cmimo_baseline, random_baseline, uniform_zf_baseline
from .channel import build_channels
from .gnn import gnn_forward
from .metrics import all_rates, csr, sensing_rate
from .scenario import (Placement, ScenarioConfig, sample_placement,
                       scenario_to_dict)
from .weights_io import GnnWeights

METHODS = ("ao", "gnn", "random", "cmimo", "zf")


@dataclass
class EvalRecord:
    method: str
    sample: int
    seed: int
    sr: float
    rates: np.ndarray
    csr: float
    ms: float
    digest: str

    def __post_init__(self):
        if not 0.0 <= self.csr <= 1.0 or self.ms < 0:
            raise ValueError("CSR must lie in [0,1] and ms be nonnegative")


def scenario_digest(config: ScenarioConfig) -> str:
    doc = json.dumps(scenario_to_dict(config), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def _evaluate(method: str, placement: Placement, config: ScenarioConfig,
              seed: int, weights: GnnWeights | None,
              ao_config: AoConfig | None):
    """Returns (W, channels, solve-time ms)."""
    if method == "ao":
        t0 = time.perf_counter()
        res = run_alternating_optimization(placement, config,
                                           ao_config or AoConfig(), seed=seed)
        ms = (time.perf_counter() - t0) * 1e3
        ch = build_channels(placement, res.layout, config)
        return res.state.W, ch, ms
    if method == "gnn":
        if weights is None:
            raise ValueError("GNN evaluation requires a weight document")
        t0 = time.perf_counter()
        layout, st = gnn_forward(weights, placement, config)
        ms = (time.perf_counter() - t0) * 1e3
        ch = build_channels(placement, layout, config)
        return st.W, ch, ms
    if method == "random":
        t0 = time.perf_counter()
        _, ch, W, _ = random_baseline(placement, config, seed)
        return W, ch, (time.perf_counter() - t0) * 1e3
    if method == "cmimo":
        t0 = time.perf_counter()
        ch, W, _ = cmimo_baseline(placement, config)
        return W, ch, (time.perf_counter() - t0) * 1e3
    if method == "zf":
        t0 = time.perf_counter()
        _, ch, W, _ = uniform_zf_baseline(placement, config)
        return W, ch, (time.perf_counter() - t0) * 1e3
    raise ValueError(f"unknown method {method!r}")


def run_benchmark(config: ScenarioConfig, methods, n_samples: int, seed: int,
                  weights: GnnWeights | None = None,
                  ao_config: AoConfig | None = None,
                  placement: Placement | None = None) -> list:
    """Shared placements across methods; deterministic except wall clocks."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    digest = scenario_digest(config)
    records = []
    for i in range(n_samples):
        place = placement if placement is not None \
            else sample_placement(config, seed + i)
        for method in methods:
            W, ch, ms = _evaluate(method, place, config, seed + i, weights,
                                  ao_config)
            rates = all_rates(W, ch, config)
            records.append(EvalRecord(
                method=method, sample=i, seed=seed + i,
                sr=sensing_rate(W, ch, config), rates=rates,
                csr=csr(rates, config.R_min), ms=ms, digest=digest))
    return records


def aggregate(records: list) -> dict:
    """Per-method means, standard deviations and counts."""
    out = {}
    for method in sorted({r.method for r in records}):
        rows = [r for r in records if r.method == method]
        sr = np.array([r.sr for r in rows])
        cs = np.array([r.csr for r in rows])
        ms = np.array([r.ms for r in rows])
        out[method] = {
            "count": len(rows),
            "mean_sr": float(sr.mean()), "std_sr": float(sr.std()),
            "mean_csr": float(cs.mean()), "std_csr": float(cs.std()),
            "mean_ms": float(ms.mean()), "std_ms": float(ms.std()),
        }
    return out


def emit_report(records: list, format: str = "csv") -> str:
    """CSV: one row per record, fixed column order (method, sample, seed,
    sr, csr, ms, digest, cr_1..cr_K).  JSON: aggregate table."""
    if format == "json":
        return json.dumps({"aggregates": aggregate(records),
                           "n_records": len(records)}, indent=2,
                          sort_keys=True)
    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")
    buf = io.StringIO()
    K = len(records[0].rates) if records else 0
    head = ["method", "sample", "seed", "sr", "csr", "ms", "digest"]
    head += [f"cr_{k + 1}" for k in range(K)]
    buf.write(",".join(head) + "\n")
    for r in records:
        cells = [r.method, str(r.sample), str(r.seed), repr(r.sr),
                 repr(r.csr), repr(r.ms), r.digest]
        cells += [repr(float(x)) for x in r.rates]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def parse_report(text: str) -> list:
    """Inverse of the CSV emitter (timing and float fields via repr round-trip)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split(",")
    n_cr = sum(1 for h in head if h.startswith("cr_"))
    records = []
    for ln in lines[1:]:
        c = ln.split(",")
        records.append(EvalRecord(
            method=c[0], sample=int(c[1]), seed=int(c[2]), sr=float(c[3]),
            csr=float(c[4]), ms=float(c[5]), digest=c[6],
            rates=np.array([float(x) for x in c[7:7 + n_cr]])))
    return records
