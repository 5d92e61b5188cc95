"""Per-trial counter-based random streams.

Every trial owns independent Philox streams keyed by
``(master_seed, trial, substream)``. A stream is an infinite sequence of
uniforms on [0, 1); consumers only ever advance a position in it, so the
values seen by an operation do not depend on how the sequence was
buffered or which backend consumed it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

INPUT = 0
SELECT = 1
OVERLAP = 2
FLOW = 3
INIT = 4

_MASK64 = (1 << 64) - 1


class RandomStream:
    def __init__(self, seed: int, trial: int = 0, substream: int = 0, chunk: int = 1024):
        if seed < 0 or trial < 0:
            raise ConfigurationError("seed and trial index must be nonnegative")
        self.seed = int(seed) & _MASK64
        self.trial = int(trial)
        self.substream = int(substream)
        ss = np.random.SeedSequence([self.seed, self.trial, self.substream])
        self._gen = np.random.Generator(np.random.Philox(ss))
        self._chunk = chunk
        self._buf = np.empty(0)
        self._pos = 0
        self.consumed = 0

    def _ensure(self, n: int) -> None:
        avail = self._buf.size - self._pos
        if avail >= n:
            return
        extra = self._gen.random(max(n - avail, self._chunk))
        self._buf = np.concatenate([self._buf[self._pos:], extra])
        self._pos = 0

    def peek(self, n: int) -> np.ndarray:
        self._ensure(n)
        return self._buf[self._pos:self._pos + n]

    def advance(self, k: int) -> None:
        self._ensure(k)
        self._pos += k
        self.consumed += k

    def uniforms(self, n: int) -> np.ndarray:
        out = self.peek(n).copy()
        self.advance(n)
        return out

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])


class ForcedStream(RandomStream):
    """A stream replaying a fixed list of uniforms (for tests and replays)."""

    def __init__(self, values):
        self.seed = 0
        self.trial = 0
        self.substream = -1
        vals = np.asarray(values, dtype=float).ravel()
        if np.any((vals < 0) | (vals >= 1)):
            raise ConfigurationError("forced uniforms must lie in [0, 1)")
        self._buf = vals
        self._pos = 0
        self.consumed = 0

    def _ensure(self, n: int) -> None:
        if self._buf.size - self._pos < n:
            raise ConfigurationError("forced random stream exhausted")


@dataclass
class TrialStreams:
    inputs: RandomStream
    select: RandomStream
    overlap: RandomStream
    flow: RandomStream


def trial_streams(seed: int, trial: int = 0) -> TrialStreams:
    return TrialStreams(
        inputs=RandomStream(seed, trial, INPUT),
        select=RandomStream(seed, trial, SELECT),
        overlap=RandomStream(seed, trial, OVERLAP),
        flow=RandomStream(seed, trial, FLOW),
    )
