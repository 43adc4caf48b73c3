"""
Barma Chains — multi-chain NUTS execution and draw storage.

Each chain owns the RNG stream ``RngStream(seed).split(chain_index)``, so
chain i produces the same draws whatever the chain count or worker count.
Chains run in a process pool when more than one worker is allowed and
are merged back in chain-index order.

Draws are kept on the constrained scale (ν back-transformed) in
``ChainDraws``; ``save_draws``/``load_draws`` persist them with msgpack.

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: ChainDraws, run_chain, run_chains, msgpack persistence.
#   How:  Per-chain failures are logged and dropped; the run fails only
#         when no chain survives.
# -------------------
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import msgpack
import numpy as np

from core.config import SamplerConfig
from core.errors import BarmaError, DataFileError, SamplingError
from core.rng import RngStream
from runtime.adaptation import MIN_WARMUP, adapt_warmup
from runtime.sampler import PhaseState, nuts_transition

logger = logging.getLogger("barma.chains")

MAX_INIT_ATTEMPTS = 100
DRAWS_FORMAT = "barma-draws/1"


@dataclass
class ChainDraws:
    """Post-warmup draws of one chain plus per-iteration diagnostics."""
    names: List[str]
    draws: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    divergent: np.ndarray
    step_size: float
    chain_id: int = 0
    n_warmup: int = 0
    log_lik: Optional[np.ndarray] = None
    final_point: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])

    @property
    def n_divergent(self) -> int:
        return int(np.sum(self.divergent))

    @property
    def mean_accept(self) -> float:
        return float(np.mean(self.accept_stat)) if self.accept_stat.size else math.nan

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"no parameter named {name!r}; have {self.names}") from None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "names": list(self.names),
            "draws": self.draws.tolist(),
            "accept_stat": self.accept_stat.tolist(),
            "tree_depth": self.tree_depth.astype(int).tolist(),
            "divergent": self.divergent.astype(bool).tolist(),
            "step_size": float(self.step_size),
            "chain_id": int(self.chain_id),
            "n_warmup": int(self.n_warmup),
            "log_lik": None if self.log_lik is None else self.log_lik.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChainDraws":
        names = list(data["names"])
        draws = np.asarray(data["draws"], dtype=float).reshape(-1, len(names))
        return cls(
            names=names,
            draws=draws,
            accept_stat=np.asarray(data["accept_stat"], dtype=float),
            tree_depth=np.asarray(data["tree_depth"], dtype=int),
            divergent=np.asarray(data["divergent"], dtype=bool),
            step_size=float(data["step_size"]),
            chain_id=int(data.get("chain_id", 0)),
            n_warmup=int(data.get("n_warmup", 0)),
            log_lik=None if data.get("log_lik") is None else np.asarray(data["log_lik"], dtype=float),
        )


def pooled(chains: Sequence[ChainDraws]) -> np.ndarray:
    """All chains' draws stacked in chain order."""
    if not chains:
        return np.empty((0, 0))
    return np.vstack([c.draws for c in chains])


# ---------------------------------------------------------------------------
# Single chain
# ---------------------------------------------------------------------------

def _initial_state(target: Any, rng: RngStream, init: Optional[np.ndarray]) -> PhaseState:
    if init is not None:
        state = PhaseState.at(target, init)
        if math.isfinite(state.log_density):
            return state
        logger.debug("supplied initial point has zero density; drawing a fresh one")
    for attempt in range(MAX_INIT_ATTEMPTS):
        state = PhaseState.at(target, target.initial_point(rng))
        if math.isfinite(state.log_density) and np.all(np.isfinite(state.grad)):
            return state
    raise SamplingError(f"no finite starting point found in {MAX_INIT_ATTEMPTS} attempts")


def run_chain(
    target: Any,
    n_warmup: int,
    n_draws: int,
    rng: RngStream,
    target_accept: float = 0.8,
    max_depth: int = 10,
    chain_id: int = 0,
    init: Optional[np.ndarray] = None,
    initial_step_size: Optional[float] = None,
    record_log_lik: bool = False,
    min_warmup: int = MIN_WARMUP,
) -> ChainDraws:
    """Warm up, then record ``n_draws`` NUTS transitions."""
    state = _initial_state(target, rng, init)
    step_size, state = adapt_warmup(
        target, state, n_warmup, rng,
        target_accept=target_accept,
        max_depth=max_depth,
        initial_step_size=initial_step_size,
        min_warmup=min_warmup,
    )
    logger.debug("chain %d adapted step size %.4g", chain_id, step_size)

    positions = np.empty((n_draws, target.dim))
    accept = np.empty(n_draws)
    depth = np.empty(n_draws, dtype=int)
    divergent = np.zeros(n_draws, dtype=bool)
    for i in range(n_draws):
        state, info = nuts_transition(state, step_size, target, rng, max_depth)
        positions[i] = state.position
        accept[i] = info.accept_stat
        depth[i] = info.tree_depth
        divergent[i] = info.divergent

    draws = target.constrain_many(positions) if hasattr(target, "constrain_many") else positions
    keep = np.all(np.isfinite(draws), axis=1)
    if not keep.all():
        logger.warning("chain %d: dropping %d non-finite draws", chain_id, int((~keep).sum()))
    if not keep.any():
        raise SamplingError(f"chain {chain_id} produced no finite draws")

    log_lik = None
    if record_log_lik:
        log_lik = np.array([target.log_likelihood(p) for p in positions[keep]])

    n_div = int(divergent.sum())
    if n_div:
        logger.warning("chain %d: %d divergent transitions", chain_id, n_div)
    names = list(target.names) if hasattr(target, "names") else [f"x{i + 1}" for i in range(target.dim)]
    return ChainDraws(
        names=names,
        draws=draws[keep],
        accept_stat=accept[keep],
        tree_depth=depth[keep],
        divergent=divergent[keep],
        step_size=step_size,
        chain_id=chain_id,
        n_warmup=n_warmup,
        log_lik=log_lik,
        final_point=state.position.copy(),
    )


# ---------------------------------------------------------------------------
# Many chains
# ---------------------------------------------------------------------------

def _chain_task(args: Tuple[Any, SamplerConfig, int]) -> Union[ChainDraws, BarmaError]:
    target, config, index = args
    rng = RngStream(config.seed).split(index)
    try:
        return run_chain(
            target,
            n_warmup=config.n_warmup,
            n_draws=config.n_draws,
            rng=rng,
            target_accept=config.target_accept,
            max_depth=config.max_tree_depth,
            chain_id=index,
        )
    except BarmaError as exc:
        return exc
    except Exception as exc:  # noqa: BLE001
        logger.debug("chain %d raised", index, exc_info=True)
        return SamplingError(f"{type(exc).__name__}: {exc}")


def run_chains(target: Any, config: SamplerConfig, threads: int = 1) -> List[ChainDraws]:
    """Run ``config.n_chains`` independent chains; returns the survivors in order."""
    config.validate()
    tasks = [(target, config, i) for i in range(config.n_chains)]
    workers = max(1, min(int(threads), config.n_chains))
    logger.info(
        "Running %d chain(s) x %d iterations (%d warmup) on %d worker(s)",
        config.n_chains, config.n_iterations, config.n_warmup, workers,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chain_task, tasks))
    else:
        results = [_chain_task(task) for task in tasks]

    chains: List[ChainDraws] = []
    failures: List[str] = []
    for index, result in enumerate(results):
        if isinstance(result, BarmaError):
            logger.error("chain %d failed: %s", index, result)
            failures.append(f"chain {index}: {result}")
        else:
            chains.append(result)
    if not chains:
        raise SamplingError("all chains failed: " + "; ".join(failures))
    logger.info(
        "Chains finished: %d ok, %d failed, %d divergent transitions",
        len(chains), len(failures), sum(c.n_divergent for c in chains),
    )
    return chains


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_draws(chains: Sequence[ChainDraws], path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    payload = {
        "format": DRAWS_FORMAT,
        "meta": meta or {},
        "chains": [c.to_dict() for c in chains],
    }
    path.write_bytes(msgpack.packb(payload, use_bin_type=True))
    return path


def load_draws(path: Union[str, Path]) -> Tuple[List[ChainDraws], Dict[str, Any]]:
    path = Path(path)
    try:
        payload = msgpack.unpackb(path.read_bytes(), raw=False)
    except (OSError, ValueError, msgpack.UnpackException) as exc:
        raise DataFileError(f"cannot read draws from {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != DRAWS_FORMAT:
        raise DataFileError(f"{path} is not a barma draws file")
    return [ChainDraws.from_dict(c) for c in payload["chains"]], dict(payload.get("meta") or {})
