"""Product-space reachability kernels.

Two interchangeable implementations of the same three steps: explore the
reachable product codes, fill the dense transition table, and compute the
non-co-reachable (dead) set. The numba path JIT-compiles scalar loops; the
numpy path vectorizes over whole BFS levels. Both must return bit-identical
arrays; see tests and benchmarks/bench_product.py.

Backend selection: the LTLGUARD_BACKEND environment variable (auto | numba |
numpy, default auto) or an explicit argument. "auto" uses numba when it
imports cleanly.

Shared data layout (built by product._pack):
  steps    (S_total, M) int32   rows are component states stacked in
                                 component order; entry [off_i + s, m] is the
                                 local successor of state s of component i
                                 under union-alphabet mask m
  offsets  (C,) int64            row offset of each component
  n_states (C,) int64            per-component state counts
  dead     (S_total,) bool       per-component dead flags, same offsets
  acc      (S_total,) bool       per-component accepting flags
  radices  (C,) int64            mixed-radix weights; a product vector
                                 (s_0..s_{C-1}) has code sum(s_i * radix_i)

A product state with any dead component collapses to an absorbing sink,
encoded as -1 in transition tables.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

from .errors import LtlGuardError

_CHOICES = ("auto", "numba", "numpy")

_REACH_CAP_MESSAGE = "product reachability cap exceeded"


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend(choice: str | None = None) -> str:
    """Return the concrete backend name ("numba" or "numpy")."""
    picked = choice or os.environ.get("LTLGUARD_BACKEND", "auto")
    if picked not in _CHOICES:
        raise LtlGuardError(
            f"unknown kernel backend {picked!r}; expected one of {', '.join(_CHOICES)}"
        )
    if picked == "auto":
        return "numba" if numba_available() else "numpy"
    if picked == "numba" and not numba_available():
        raise LtlGuardError("numba backend requested but numba is not importable")
    return picked


# ---------------------------------------------------------------- numpy path


def _decode_step(frontier, m_all, steps, offsets, n_states, dead, radices):
    """Successor codes for every (frontier code, mask); dead components -> -1."""
    succ = np.zeros((frontier.size, m_all), dtype=np.int64)
    sink = np.zeros((frontier.size, m_all), dtype=bool)
    for i in range(len(offsets)):
        local = (frontier // radices[i]) % n_states[i]
        nxt = steps[offsets[i] + local]
        succ += nxt.astype(np.int64) * radices[i]
        sink |= dead[offsets[i] + nxt]
    succ[sink] = -1
    return succ


def explore_numpy(steps, offsets, n_states, dead, radices, start_code, m_all, cap):
    known = np.array([start_code], dtype=np.int64)
    frontier = known
    while frontier.size:
        succ = _decode_step(frontier, m_all, steps, offsets, n_states, dead, radices)
        candidates = np.unique(succ)
        candidates = candidates[candidates >= 0]
        fresh = np.setdiff1d(candidates, known, assume_unique=True)
        known = np.union1d(known, fresh)
        if known.size > cap:
            raise ValueError(_REACH_CAP_MESSAGE)
        frontier = fresh
    return known


def fill_numpy(reachable, steps, offsets, n_states, dead, radices, m_all):
    succ = _decode_step(reachable, m_all, steps, offsets, n_states, dead, radices)
    sink = succ < 0
    safe = np.where(sink, reachable[0], succ)
    trans = np.searchsorted(reachable, safe).astype(np.int32)
    trans[sink] = -1
    return trans


def accepting_numpy(reachable, offsets, n_states, acc, radices):
    out = np.ones(reachable.size, dtype=bool)
    for i in range(len(offsets)):
        local = (reachable // radices[i]) % n_states[i]
        out &= acc[offsets[i] + local]
    return out


def dead_numpy(trans, accepting):
    valid = trans >= 0
    safe = np.where(valid, trans, 0)
    coreach = accepting.copy()
    while True:
        grown = coreach | (coreach[safe] & valid).any(axis=1)
        if np.array_equal(grown, coreach):
            break
        coreach = grown
    return ~coreach


# ---------------------------------------------------------------- numba path


@lru_cache(maxsize=1)
def _numba_kernels():
    from numba import njit

    @njit(cache=True)
    def explore_nb(steps, offsets, n_states, dead, radices, start_code, m_all, cap):
        n_comp = len(offsets)
        visited = {start_code: True}
        queue = [start_code]
        head = 0
        rows = np.empty(n_comp, dtype=np.int64)
        while head < len(queue):
            code = queue[head]
            head += 1
            # component decode is mask-independent, hoist it out of the m loop
            for i in range(n_comp):
                rows[i] = offsets[i] + (code // radices[i]) % n_states[i]
            for m in range(m_all):
                succ = np.int64(0)
                sink = False
                for i in range(n_comp):
                    nxt = steps[rows[i], m]
                    if dead[offsets[i] + nxt]:
                        sink = True
                        break
                    succ += np.int64(nxt) * radices[i]
                if sink or succ in visited:
                    continue
                visited[succ] = True
                queue.append(succ)
                if len(queue) > cap:
                    raise ValueError(_REACH_CAP_MESSAGE)
        out = np.empty(len(queue), dtype=np.int64)
        for k in range(len(queue)):
            out[k] = queue[k]
        return np.sort(out)

    @njit(cache=True)
    def fill_nb(reachable, steps, offsets, n_states, dead, radices, m_all):
        n_reach = reachable.shape[0]
        n_comp = len(offsets)
        trans = np.full((n_reach, m_all), -1, dtype=np.int32)
        rows = np.empty(n_comp, dtype=np.int64)
        for r in range(n_reach):
            code = reachable[r]
            for i in range(n_comp):
                rows[i] = offsets[i] + (code // radices[i]) % n_states[i]
            for m in range(m_all):
                succ = np.int64(0)
                sink = False
                for i in range(n_comp):
                    nxt = steps[rows[i], m]
                    if dead[offsets[i] + nxt]:
                        sink = True
                        break
                    succ += np.int64(nxt) * radices[i]
                if not sink:
                    trans[r, m] = np.searchsorted(reachable, succ)
        return trans

    @njit(cache=True)
    def accepting_nb(reachable, offsets, n_states, acc, radices):
        n_reach = reachable.shape[0]
        n_comp = len(offsets)
        out = np.ones(n_reach, dtype=np.bool_)
        for r in range(n_reach):
            code = reachable[r]
            for i in range(n_comp):
                local = (code // radices[i]) % n_states[i]
                if not acc[offsets[i] + local]:
                    out[r] = False
                    break
        return out

    @njit(cache=True)
    def dead_nb(trans, accepting):
        n_reach, m_all = trans.shape
        coreach = accepting.copy()
        changed = True
        while changed:
            changed = False
            for r in range(n_reach):
                if coreach[r]:
                    continue
                for m in range(m_all):
                    t = trans[r, m]
                    if t >= 0 and coreach[t]:
                        coreach[r] = True
                        changed = True
                        break
        return ~coreach

    return explore_nb, fill_nb, accepting_nb, dead_nb


def explore(backend, *args):
    if backend == "numba":
        return _numba_kernels()[0](*args)
    return explore_numpy(*args)


def fill(backend, *args):
    if backend == "numba":
        return _numba_kernels()[1](*args)
    return fill_numpy(*args)


def accepting(backend, *args):
    if backend == "numba":
        return _numba_kernels()[2](*args)
    return accepting_numpy(*args)


def dead(backend, *args):
    if backend == "numba":
        return _numba_kernels()[3](*args)
    return dead_numpy(*args)
