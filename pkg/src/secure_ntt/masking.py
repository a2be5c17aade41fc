"""Local Mask (LM) unit: blinds every poly_mem write with a random twiddle.

Each write stores ``(U +/- V) * omega_r`` where ``omega_r = w_mem[r]``.  The
pipeline keeps ``r`` as a tag next to the word so the read side (and the
final check) can strip the mask with ``w_inv[r]``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .ntt import TwiddleTable


class MaskMode(str, Enum):
    PER_WRITE = "per-write"
    PER_RUN = "per-run"
    OFF = "off"


@dataclass(frozen=True)
class MaskContext:
    r_index: int
    omega_r: int
    omega_r_inv: int
    rng_seed: int | None = None


IDENTITY = MaskContext(0, 1, 1)


def context_for(r_index: int, w: TwiddleTable) -> MaskContext:
    return MaskContext(r_index, w.entries[r_index], w.inverse_entries[r_index])


def draw_mask(rng: random.Random, w: TwiddleTable, seed: int | None = None) -> MaskContext:
    """Uniform draw over w_mem addresses holding a nonzero (invertible) twiddle."""
    choices = [i for i, e in enumerate(w.entries) if e]
    ctx = context_for(rng.choice(choices), w)
    if seed is not None:
        ctx = MaskContext(ctx.r_index, ctx.omega_r, ctx.omega_r_inv, seed)
    return ctx


def mask_pair(u: int, v: int, ctx: MaskContext, q: int) -> tuple[int, int]:
    return (u + v) * ctx.omega_r % q, (u - v) * ctx.omega_r % q


def unmask_coeff(x: int, ctx: MaskContext, q: int) -> int:
    return x * ctx.omega_r_inv % q


def unmask_image(memory: list[int], tags: list[int], w: TwiddleTable, q: int) -> list[int]:
    inv = w.inverse_entries
    return [x * inv[t] % q for x, t in zip(memory, tags)]


class LocalMask:
    """Per-pipeline mask source.  Owns its generator; never shared."""

    def __init__(self, mode: MaskMode | str, w: TwiddleTable, seed: int | None = 0):
        self.mode = MaskMode(mode)
        self.w = w
        self.seed = seed
        self.rng = random.Random(seed)
        self._nonzero = [i for i, e in enumerate(w.entries) if e]
        self._run_index: int | None = None

    def begin_run(self) -> None:
        if self.mode is MaskMode.PER_RUN:
            self._run_index = self.rng.choice(self._nonzero)

    def next_index(self) -> int:
        """w_mem address of the mask for the next write."""
        if self.mode is MaskMode.PER_WRITE:
            return self._nonzero[self.rng.randrange(len(self._nonzero))]
        if self.mode is MaskMode.PER_RUN:
            if self._run_index is None:
                self.begin_run()
            return self._run_index
        return 0
