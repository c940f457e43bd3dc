"""HTTP facade over the optimizer, the learned network and the benchmark."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .ao import AoConfig, run_alternating_optimization
from .baselines import uniform_zf_baseline
from .bench import METHODS, aggregate, emit_report, run_benchmark
from .channel import build_channels
from .gnn import gnn_forward
from .metrics import all_rates, csr, penalty_terms, sensing_rate
from .scenario import (Placement, ScenarioError, sample_placement,
                       scenario_from_dict)
from .weights_io import WeightFormatError, load_weights


class OptimizeRequest(BaseModel):
    scenario: dict
    seed: int = 0
    iterations: int | None = None


class InferRequest(BaseModel):
    scenario: dict
    weights: dict
    seed: int = 0


class BenchRequest(BaseModel):
    scenario: dict
    methods: list[str] = Field(default_factory=lambda: list(METHODS))
    samples: int = 10
    seed: int = 0
    weights: dict | None = None
    format: str = "json"


class CheckRequest(BaseModel):
    scenario: dict
    weights: dict | None = None


class SolutionResponse(BaseModel):
    sr: float
    rates: list[float]
    csr: float
    qos_feasible: bool
    tx_x: list
    rx_x: list
    tx_selected_segment: list[int]
    W_real: list
    W_imag: list
    trace_csv: str | None = None


def _parse_scenario(doc: dict, seed: int):
    try:
        config, placement = scenario_from_dict(doc)
    except (ScenarioError, TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    if placement is None:
        placement = sample_placement(config, seed)
    return config, placement


def _solution(config, placement: Placement, layout, W, qos: bool,
              trace_csv=None) -> SolutionResponse:
    ch = build_channels(placement, layout, config)
    rates = all_rates(W, ch, config)
    return SolutionResponse(
        sr=sensing_rate(W, ch, config), rates=[float(r) for r in rates],
        csr=csr(rates, config.R_min), qos_feasible=qos,
        tx_x=layout.tx_x.tolist(), rx_x=layout.rx_x.tolist(),
        tx_selected_segment=layout.tx_selected_segment.tolist(),
        W_real=W.real.tolist(), W_imag=W.imag.tolist(),
        trace_csv=trace_csv)


def create_app() -> FastAPI:
    app = FastAPI(title="pinchbeam", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/optimize", response_model=SolutionResponse)
    def optimize(req: OptimizeRequest):
        config, placement = _parse_scenario(req.scenario, req.seed)
        ao = AoConfig() if req.iterations is None \
            else AoConfig(T=req.iterations)
        res = run_alternating_optimization(placement, config, ao,
                                           seed=req.seed)
        return _solution(config, placement, res.layout, res.state.W,
                         res.qos_feasible, trace_csv=res.trace.to_csv())

    @app.post("/infer", response_model=SolutionResponse)
    def infer(req: InferRequest):
        config, placement = _parse_scenario(req.scenario, req.seed)
        try:
            weights = load_weights(req.weights)
            layout, state = gnn_forward(weights, placement, config)
        except WeightFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        ch = build_channels(placement, layout, config)
        qos = bool(penalty_terms(state.W, ch.h_eff_user, config).min() >= -1e-6)
        return _solution(config, placement, layout, state.W, qos)

    @app.post("/bench")
    def bench(req: BenchRequest):
        config, placement = _parse_scenario(req.scenario, req.seed)
        fixed = "users" in req.scenario or "targets" in req.scenario
        weights = None
        if req.weights is not None:
            try:
                weights = load_weights(req.weights)
            except WeightFormatError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        if "gnn" in req.methods and weights is None:
            raise HTTPException(status_code=422,
                                detail="method 'gnn' requires weights")
        try:
            records = run_benchmark(
                config, req.methods, req.samples, req.seed, weights=weights,
                placement=placement if fixed else None)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if req.format == "csv":
            return {"format": "csv", "report": emit_report(records, "csv")}
        return {"format": "json", "aggregates": aggregate(records),
                "n_records": len(records)}

    @app.post("/check")
    def check(req: CheckRequest):
        config, placement = _parse_scenario(req.scenario, 0)
        results = {}
        layout, ch, W, _ = uniform_zf_baseline(placement, config)
        H = ch.h_eff_user
        off = H.conj() @ W
        np.fill_diagonal(off, 0.0)
        results["zf_orthogonality"] = float(np.abs(off).max())
        results["layout_feasible"] = bool(layout.is_feasible(config))
        results["power_budget"] = float(np.linalg.norm(W) ** 2)
        res = run_alternating_optimization(placement, config,
                                           AoConfig(T=2), seed=0)
        objs = res.trace.objectives
        results["ao_monotone"] = bool(
            all(b <= a + 1e-9 for a, b in zip(objs, objs[1:])))
        results["ao_qos_feasible"] = bool(res.qos_feasible)
        if req.weights is not None:
            try:
                weights = load_weights(req.weights)
                gnn_forward(weights, placement, config)
                results["weights_ok"] = True
            except WeightFormatError as exc:
                results["weights_ok"] = False
                results["weights_error"] = str(exc)
        results["ok"] = all(v is not False for v in results.values()
                            if isinstance(v, bool))
        return results

    return app


app = create_app()
