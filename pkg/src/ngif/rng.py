"""Deterministic random streams derived from a single master seed.

Every stochastic component of the pipeline (test bank sampling, parameter
initialization, minibatch selection, SDE noise, data generation) draws from
its own counter-based Philox stream.  Streams are keyed by
``(master_seed, stream_id)`` where the stream id is a fixed 64-bit word, so
runs are bit-reproducible per seed and advancing one stream never perturbs
another.
"""

from __future__ import annotations

import numpy as np

__all__ = ["STREAMS", "stream", "philox_state", "restore_philox"]

# Fixed stream ids.  Never renumber: checkpoints and regression baselines
# depend on the assignment.
STREAMS = {
    "bank": 1,
    "params": 2,
    "batch": 3,
    "sde": 4,
    "data": 5,
    "subsample": 6,
}


def stream(master_seed: int, name: str, salt: int = 0) -> np.random.Generator:
    """Return the named Philox stream for ``master_seed``.

    :param salt: optional sub-stream discriminator (e.g. one stream per
        sweep configuration); folded into the key word.
    """
    if name not in STREAMS:
        raise ValueError(f"unknown stream name {name!r}; known: {sorted(STREAMS)}")
    if not 0 <= salt < 2**32:
        raise ValueError(f"salt must fit in 32 bits, got {salt}")
    key = np.array([master_seed % 2**64, (STREAMS[name] << 32) | salt], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def philox_state(gen: np.random.Generator) -> dict:
    """Extract the serializable Philox state of a stream as plain ints."""
    st = gen.bit_generator.state
    return {
        "counter": [int(w) for w in st["state"]["counter"]],
        "key": [int(w) for w in st["state"]["key"]],
        "buffer": [int(w) for w in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def restore_philox(state: dict) -> np.random.Generator:
    """Rebuild a stream from :func:`philox_state` output."""
    bg = np.random.Philox(key=np.array(state["key"], dtype=np.uint64))
    bg.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(state["counter"], dtype=np.uint64),
            "key": np.array(state["key"], dtype=np.uint64),
        },
        "buffer": np.array(state["buffer"], dtype=np.uint64),
        "buffer_pos": state["buffer_pos"],
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }
    return np.random.Generator(bg)
