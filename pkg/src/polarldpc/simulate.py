"""Monte-Carlo BSC simulation: FER/BER sweeps with per-layer error counts.

Every frame draws its noise from its own generator, seeded from
``(seed, frame index)``.  The noise of frame ``f`` is therefore the same
at every crossover probability (common random numbers) and does not depend
on how frames are split across workers.  Early stopping is applied in frame
order after the fact, so the report is identical for any worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codec import SystematicEncoder, format_csv
from .decode import L_SAT, bp_decode_batch
from .graph import TannerGraph


def bsc_llr(eps: float) -> float:
    """Channel LLR magnitude ``log((1 - eps) / eps)``."""
    if eps == 0.5:
        return 0.0
    return math.log1p(-eps) - math.log(eps)


def transmit_all_zero(eps: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Channel LLRs for the all-zero word: ``+L`` per position, ``-L`` where flipped."""
    if not 0.0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 0.5]")
    mag = bsc_llr(eps)
    flips = rng.random(n) < eps
    return np.where(flips, -mag, mag)


def frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(frame,)))


@dataclass(frozen=True)
class SimConfig:
    eps: tuple[float, ...]
    frames: int
    max_iter: int = 50
    schedule: str = "plain"
    tau_llr: float = math.inf
    seed: int = 0
    stop_after: int | None = 100
    random_codeword: bool = False
    chunk: int = 32

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.frames < 1:
            raise ValueError("frames must be at least 1")
        if not self.eps:
            raise ValueError("at least one eps value is required")
        if any(not 0.0 < e <= 0.5 for e in self.eps):
            raise ValueError("every eps must lie in (0, 0.5]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.stop_after is not None and self.stop_after < 1:
            raise ValueError("stop_after must be positive or None")
        if self.chunk < 1:
            raise ValueError("chunk must be positive")


@dataclass(frozen=True)
class EpsPoint:
    """Counts for one crossover probability."""

    eps: float
    frames: int
    frame_errors: int
    bit_errors: int
    layer_frame_errors: tuple[int, ...]
    iter_hist: tuple[int, ...]
    detected_errors: int  # decoder did not reach a zero syndrome
    undetected_errors: int  # zero syndrome, wrong codeword
    n_var: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames

    @property
    def ber(self) -> float:
        return self.bit_errors / self.frames / self.n_var if self.n_var else 0.0

    @property
    def mean_iters(self) -> float:
        hist = np.asarray(self.iter_hist)
        return float((hist * np.arange(len(hist))).sum() / self.frames)

    def layer_fer(self, layer: int) -> float:
        return self.layer_frame_errors[layer] / self.frames


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    n_var: int
    n_layers: int
    points: tuple[EpsPoint, ...]

    def header(self) -> list[str]:
        return (["eps", "frames", "frame_errors", "bit_errors", "fer", "ber"]
                + [f"fer_layer{k}" for k in range(self.n_layers)]
                + ["mean_iters", "detected_errors", "undetected_errors"])

    def rows(self) -> list[list]:
        out = []
        for p in self.points:
            out.append([p.eps, p.frames, p.frame_errors, p.bit_errors, p.fer, p.ber]
                       + [p.layer_fer(k) for k in range(self.n_layers)]
                       + [p.mean_iters, p.detected_errors, p.undetected_errors])
        return out

    def to_csv(self) -> str:
        return format_csv(self.header(), self.rows())


# --------------------------------------------------------------------------
# frame processing
# --------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(graph: TannerGraph, cfg: SimConfig):
    _WORKER_STATE["graph"] = graph
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["encoder"] = SystematicEncoder(graph) if cfg.random_codeword else None


def _run_frames(eps: float, start: int, stop: int):
    """Decode frames ``start..stop-1``; returns per-frame arrays."""
    g: TannerGraph = _WORKER_STATE["graph"]
    cfg: SimConfig = _WORKER_STATE["cfg"]
    enc: SystematicEncoder | None = _WORKER_STATE["encoder"]
    count = stop - start
    sent = np.zeros((count, g.n_var), dtype=np.uint8)
    llrs = np.empty((count, g.n_var))
    mag = bsc_llr(eps)
    for t in range(count):
        rng = frame_rng(cfg.seed, start + t)
        flips = rng.random(g.n_var) < eps
        if enc is not None:
            sent[t] = enc.encode(rng.integers(0, 2, enc.k, dtype=np.uint8))
        received = sent[t] ^ flips
        llrs[t] = np.where(received == 1, -mag, mag)
    bits, iters, conv = bp_decode_batch(g, llrs, cfg.max_iter, cfg.schedule, cfg.tau_llr, L_SAT)
    wrong = bits != sent
    bit_err = wrong.sum(axis=1)
    n_layers = max(g.n_layers, 1)
    layer_err = np.zeros((count, n_layers), dtype=bool)
    for k in range(n_layers):
        mask = g.var_layer == k
        if mask.any():
            layer_err[:, k] = wrong[:, mask].any(axis=1)
    return bit_err, layer_err, iters, conv


def _ranges(frames: int, chunk: int):
    return [(s, min(s + chunk, frames)) for s in range(0, frames, chunk)]


def _sweep_one(eps: float, cfg: SimConfig, g: TannerGraph, pool: ProcessPoolExecutor | None) -> EpsPoint:
    t0 = time.perf_counter()
    n_layers = max(g.n_layers, 1)
    bit_errors = 0
    frame_errors = 0
    detected = 0
    layer_errors = np.zeros(n_layers, dtype=np.int64)
    hist = np.zeros(cfg.max_iter + 1, dtype=np.int64)
    frames_done = 0
    limit = cfg.stop_after

    def consume(result) -> bool:
        """Fold one chunk in frame order; True once the early-stop count is hit."""
        nonlocal bit_errors, frame_errors, detected, frames_done
        bit_err, layer_err, iters, conv = result
        for t in range(len(bit_err)):
            frames_done += 1
            hist[iters[t]] += 1
            if bit_err[t]:
                frame_errors += 1
                bit_errors += int(bit_err[t])
                layer_errors[:] += layer_err[t]
                if not conv[t]:
                    detected += 1
            if limit is not None and frame_errors >= limit:
                return True
        return False

    ranges = _ranges(cfg.frames, cfg.chunk)
    if pool is None:
        for s, e in ranges:
            if consume(_run_frames(eps, s, e)):
                break
    else:
        # keep a bounded window of chunks in flight, consume in order
        window = 4 * max(getattr(pool, "_max_workers", 1), 1)
        pending = []
        nxt = 0
        while nxt < len(ranges) and len(pending) < window:
            pending.append(pool.submit(_run_frames, eps, *ranges[nxt]))
            nxt += 1
        stop = False
        while pending and not stop:
            fut = pending.pop(0)
            stop = consume(fut.result())
            if not stop and nxt < len(ranges):
                pending.append(pool.submit(_run_frames, eps, *ranges[nxt]))
                nxt += 1
        for fut in pending:
            fut.cancel()

    return EpsPoint(
        eps=eps,
        frames=frames_done,
        frame_errors=frame_errors,
        bit_errors=bit_errors,
        layer_frame_errors=tuple(int(x) for x in layer_errors),
        iter_hist=tuple(int(x) for x in hist),
        detected_errors=detected,
        undetected_errors=frame_errors - detected,
        wall_time=time.perf_counter() - t0,
        n_var=g.n_var,
    )


def run_sweep(graph: TannerGraph, cfg: SimConfig, workers: int | None = 1) -> SimReport:
    """Simulate every ``eps`` of ``cfg`` on ``graph``.

    ``workers=None`` uses all available CPUs.  The result does not depend on
    ``workers``: frames are seeded individually and folded in frame order.
    """
    if workers is None:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError("workers must be at least 1")
    points = []
    if workers == 1:
        _init_worker(graph, cfg)
        try:
            for eps in cfg.eps:
                points.append(_sweep_one(eps, cfg, graph, None))
        finally:
            _WORKER_STATE.clear()
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(graph, cfg)) as pool:
            for eps in cfg.eps:
                points.append(_sweep_one(eps, cfg, graph, pool))
    return SimReport(cfg, graph.n_var, max(graph.n_layers, 1), tuple(points))


def parse_eps(spec: str) -> list[float]:
    """``"a:step:b"`` (inclusive range) or a comma-separated list."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be 'start:step:stop', got {spec!r}")
        a, step, b = (float(x) for x in parts)
        if step <= 0 or b < a:
            raise ValueError(f"bad eps range {spec!r}")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + k * step, 12) for k in range(count)]
    return [float(x) for x in spec.split(",") if x.strip()]


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else math.inf


__all__ = [
    "EpsPoint", "SimConfig", "SimReport", "binomial_sigma", "bsc_llr", "frame_rng",
    "parse_eps", "run_sweep", "transmit_all_zero",
]

