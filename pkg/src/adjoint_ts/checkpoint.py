"""Binomial checkpointing for the reverse sweep.

Two schedule families are planned by dynamic programming:

``sol``
    a checkpoint holds the solution u_i only.  Every adjoint step except the
    last needs its forward step recomputed, so the recomputation count
    equals the classic binomial (revolve) optimum.
``sol+stages``
    a checkpoint at index i holds the complete record of step i-1 (u_{i-1},
    u_i and the stage values), so that step can be adjoined straight from
    the checkpoint.  This saves one recomputation per checkpoint use.

A schedule is a flat list of :class:`Action` objects with stack discipline
(restore and discard always touch the most recent checkpoint).
:class:`StepProvider` executes it and hands records to the adjoint sweep.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Optional

import numpy as np

from .forward import RK4, StepperConfig, StepRecord, take_step
from .problem import DAEProblem, Objective
from .tlm import tlm_step

MODES = ("sol", "sol+stages")


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    """One schedule instruction.

    kind is 'store', 'restore', 'discard', 'advance' or 'adjoin'.  For
    'advance' the step range is [index, target).  ``stages`` marks a
    record-carrying checkpoint; ``keep`` leaves a restored checkpoint on
    the stack.
    """

    kind: str
    index: int
    target: Optional[int] = None
    stages: bool = False
    keep: bool = False

    def __str__(self) -> str:
        if self.kind == "advance":
            return f"advance {self.index}->{self.target}"
        if self.kind == "store":
            return f"store {self.index}" + (" +stages" if self.stages else "")
        if self.kind == "restore":
            return f"restore {self.index}" + (" keep" if self.keep else " pop")
        return f"{self.kind} {self.index}"


@dataclass
class CheckpointSchedule:
    num_steps: int
    capacity: int
    mode: str
    actions: list[Action] = field(default_factory=list)

    @property
    def advances(self) -> int:
        return sum(a.target - a.index for a in self.actions if a.kind == "advance")

    @property
    def recomputations(self) -> int:
        """Forward steps executed beyond the initial sweep."""
        return self.advances - self.num_steps

    @property
    def peak_checkpoints(self) -> int:
        depth = peak = 0
        for a in self.actions:
            if a.kind == "store":
                depth += 1
                peak = max(peak, depth)
            elif a.kind == "discard" or (a.kind == "restore" and not a.keep):
                depth -= 1
        return peak


def _check_args(num_steps: int, capacity: int, mode: str) -> None:
    if num_steps < 1:
        raise ValueError("num_steps must be positive")
    if capacity < 1:
        raise ValueError("checkpoint capacity must be at least 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@lru_cache(maxsize=64)
def _sol_tables(N: int, s: int):
    """F[c][l] = forward steps to reverse l steps from a stored start with
    c checkpoints (including the start).  choice 0 = no intermediate store."""
    F = np.zeros((s + 1, N + 1), dtype=np.int64)
    choice = np.zeros((s + 1, N + 1), dtype=np.int64)
    F[:, 1] = 1
    for c in range(1, s + 1):
        for l in range(2, N + 1):
            best = l + F[c, l - 1]
            arg = 0
            if c >= 2:
                j = np.arange(1, l)
                cand = j + F[c - 1, l - j] + F[c, j]
                k = int(np.argmin(cand))
                if cand[k] < best:
                    best, arg = int(cand[k]), k + 1
            F[c, l] = best
            choice[c, l] = arg
    return F, choice


@lru_cache(maxsize=64)
def _stage_tables(N: int, c_max: int):
    """T[c][l] = forward steps to reverse l steps from a stages checkpoint
    with c further free slots."""
    T = np.zeros((c_max + 1, N + 1), dtype=np.int64)
    choice = np.zeros((c_max + 1, N + 1), dtype=np.int64)
    if N >= 1:
        T[:, 1] = 1
    for c in range(c_max + 1):
        for l in range(2, N + 1):
            best = l + T[c, l - 1]
            arg = 0
            if c >= 1:
                j = np.arange(1, l)
                cand = j + T[c - 1, l - j] + T[c, j - 1]
                k = int(np.argmin(cand))
                if cand[k] < best:
                    best, arg = int(cand[k]), k + 1
            T[c, l] = best
            choice[c, l] = arg
    return T, choice


def total_forward_steps(num_steps: int, capacity: int, mode: str = "sol+stages") -> int:
    """Forward steps (initial sweep included) of the optimal schedule."""
    _check_args(num_steps, capacity, mode)
    N, s = num_steps, capacity
    if mode == "sol":
        s = min(s, N)
        F, _ = _sol_tables(N, s)
        return int(F[s, N])
    if N == 1:
        return 1
    c = min(s - 1, N)
    T, _ = _stage_tables(N - 1, c)
    return 1 + int(T[c, N - 1])


def count_recomputations(schedule_or_steps, capacity: Optional[int] = None, mode: str = "sol+stages") -> int:
    """Replayed forward steps of a schedule, or of the optimal schedule for
    (num_steps, capacity, mode) computed from the DP table alone."""
    if isinstance(schedule_or_steps, CheckpointSchedule):
        return schedule_or_steps.recomputations
    return total_forward_steps(schedule_or_steps, capacity, mode) - schedule_or_steps


def binomial_forward_steps(num_steps: int, capacity: int) -> int:
    """Closed-form minimal forward steps for solution-only checkpointing.

    With beta(s, r) = C(s+r, s) and r the smallest repetition number with
    beta(s, r) >= l, the recomputations number r*l - beta(s+1, r-1); the
    initial sweep adds l.
    """
    l, s = num_steps, capacity
    if l < 1 or s < 1:
        raise ValueError("need num_steps >= 1 and capacity >= 1")
    r = 0
    while comb(s + r, s) < l:
        r += 1
    beta = comb(s + r, s + 1) if r >= 1 else 0
    return r * l - beta + l


def units_to_checkpoints(units: int, num_stages: int, mode: str) -> int:
    """Checkpoints that fit in ``units`` solution-sized memory slots."""
    if mode == "sol":
        return units
    return units // (1 + num_stages)


def plan_schedule(num_steps: int, capacity: int, mode: str = "sol+stages") -> CheckpointSchedule:
    """Optimal action list for ``num_steps`` steps and ``capacity`` checkpoints."""
    _check_args(num_steps, capacity, mode)
    N = num_steps
    actions: list[Action] = []
    if mode == "sol":
        s = min(capacity, N)
        _, choice = _sol_tables(N, s)

        def sol(start: int, l: int, c: int, positioned: bool) -> None:
            while True:
                if l == 1:
                    if not positioned:
                        actions.append(Action("restore", start, keep=False))
                    actions.append(Action("advance", start, start + 1))
                    actions.append(Action("adjoin", start))
                    if positioned:
                        actions.append(Action("discard", start))
                    return
                if not positioned:
                    actions.append(Action("restore", start, keep=True))
                j = int(choice[c, l])
                if j == 0:
                    actions.append(Action("advance", start, start + l))
                    actions.append(Action("adjoin", start + l - 1))
                    l, positioned = l - 1, False
                    continue
                actions.append(Action("advance", start, start + j))
                actions.append(Action("store", start + j))
                sol(start + j, l - j, c - 1, True)
                l, positioned = j, False

        actions.append(Action("store", 0))
        sol(0, N, s, True)
    else:
        c_top = min(capacity - 1, N)
        T, choice = _stage_tables(max(N - 1, 1), c_top)

        def stg(start: int, l: int, c: int, positioned: bool) -> None:
            while l > 0:
                if not positioned:
                    actions.append(Action("restore", start, keep=True))
                j = int(choice[c, l]) if l >= 2 else 0
                if j == 0:
                    actions.append(Action("advance", start, start + l))
                    actions.append(Action("adjoin", start + l - 1))
                    l, positioned = l - 1, False
                    continue
                actions.append(Action("advance", start, start + j))
                actions.append(Action("store", start + j, stages=True))
                stg(start + j, l - j, c - 1, True)
                actions.append(Action("restore", start + j, keep=False))
                actions.append(Action("adjoin", start + j - 1))
                l, positioned = j - 1, False

        actions.append(Action("advance", 0, 1))
        if N == 1:
            actions.append(Action("adjoin", 0))
        else:
            actions.append(Action("store", 1, stages=True))
            stg(1, N - 1, c_top, True)
            actions.append(Action("restore", 1, keep=False))
            actions.append(Action("adjoin", 0))
    return CheckpointSchedule(N, capacity, mode, actions)


def validate_schedule(schedule: CheckpointSchedule) -> None:
    """Simulate a schedule symbolically; raise AssertionError on any breach.

    Checks capacity, stack discipline, record availability and that every
    step is adjoined exactly once in decreasing order.
    """
    N = schedule.num_steps
    stack: list[tuple[int, bool]] = []
    pos: Optional[int] = 0
    record: Optional[int] = None  # step whose record is in hand
    expected = N - 1
    for a in schedule.actions:
        if a.kind == "store":
            assert pos == a.index, f"{a}: working state is at {pos}"
            if a.stages:
                assert record == a.index - 1, f"{a}: no record of step {a.index - 1}"
            stack.append((a.index, a.stages))
            assert len(stack) <= schedule.capacity, f"{a}: capacity {schedule.capacity} exceeded"
        elif a.kind == "restore":
            assert stack and stack[-1][0] == a.index, f"{a}: not on top of the stack"
            idx, stages = stack[-1]
            if not a.keep:
                stack.pop()
            pos = idx
            record = idx - 1 if stages else None
        elif a.kind == "discard":
            assert stack and stack[-1][0] == a.index, f"{a}: not on top of the stack"
            stack.pop()
        elif a.kind == "advance":
            assert pos == a.index and a.target > a.index, f"{a}: working state is at {pos}"
            pos, record = a.target, a.target - 1
        elif a.kind == "adjoin":
            assert a.index == expected, f"{a}: expected adjoin {expected}"
            assert record == a.index, f"{a}: record in hand is {record}"
            expected -= 1
        else:
            raise AssertionError(f"unknown action {a.kind}")
    assert expected == -1, f"steps 0..{expected} never adjoined"
    assert not stack, "checkpoints left on the stack"


# ---------------------------------------------------------------------------
# checkpoint storage
# ---------------------------------------------------------------------------

MAGIC = b"ADTS"
VERSION = 1
HEADER = struct.Struct("<4sHHqqq")
FLAG_RECORD = 1
FLAG_TANGENT = 2
FLAG_THETA = 4


@dataclass
class CheckpointUnit:
    """State at ``index`` (with running integral and optional tangent), plus
    the full record of step index-1 for stages checkpoints."""

    index: int
    u: np.ndarray
    q: float
    w: Optional[np.ndarray] = None
    record: Optional[StepRecord] = None


def write_unit(path, unit: CheckpointUnit) -> None:
    """Binary layout: header <4sHHqqq (magic, version, flags, index, N_d,
    stage count) then little-endian float64 payload: q, [t, h, theta,
    q_prev] if a record, u, [w], [record.u, stages..., record.w]."""
    rec = unit.record
    flags = (FLAG_RECORD if rec is not None else 0) | (FLAG_TANGENT if unit.w is not None else 0)
    if rec is not None and rec.is_theta:
        flags |= FLAG_THETA
    nd = unit.u.size
    nstages = len(rec.stages) if rec is not None else 0
    parts = [np.array([unit.q])]
    if rec is not None:
        theta = rec.theta if rec.is_theta else np.nan
        parts.append(np.array([rec.t, rec.h, theta, rec.q]))
    parts.append(unit.u)
    if unit.w is not None:
        parts.append(unit.w)
    if rec is not None:
        parts.append(rec.u)
        parts.extend(rec.stages)
        if unit.w is not None:
            parts.append(rec.w)
    payload = np.concatenate([np.ravel(x) for x in parts]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, flags, unit.index, nd, nstages))
        fh.write(payload.tobytes())


def read_unit(path) -> CheckpointUnit:
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        data = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    magic, version, flags, index, nd, nstages = HEADER.unpack(head)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a checkpoint file (magic {magic!r}, version {version})")
    pos = 0

    def take(k):
        nonlocal pos
        out = data[pos:pos + k].copy()
        pos += k
        return out

    q = float(take(1)[0])
    has_record = bool(flags & FLAG_RECORD)
    tangent = bool(flags & FLAG_TANGENT)
    if has_record:
        t, h, theta, q_prev = take(4)
    u = take(nd)
    w = take(nd) if tangent else None
    record = None
    if has_record:
        u_prev = take(nd)
        stages = tuple(take(nd) for _ in range(nstages))
        w_prev = take(nd) if tangent else None
        record = StepRecord(n=index - 1, t=float(t), h=float(h), u=u_prev, u_next=u, stages=stages,
                            q=float(q_prev), q_next=q, theta=float(theta) if flags & FLAG_THETA else None,
                            w=w_prev, w_next=w)
    if pos != data.size:
        raise ValueError(f"{path}: payload length mismatch")
    return CheckpointUnit(index, u, q, w, record)


class MemoryStore:
    def __init__(self):
        self._units: dict[int, CheckpointUnit] = {}

    def put(self, unit: CheckpointUnit) -> None:
        self._units[unit.index] = unit

    def get(self, index: int) -> CheckpointUnit:
        return self._units[index]

    def drop(self, index: int) -> None:
        del self._units[index]


class DiskStore:
    """One file per checkpoint in ``directory`` (a fresh temp dir by default)."""

    def __init__(self, directory=None):
        self._tmp = None
        if directory is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="adjoint-ts-")
            directory = self._tmp.name
        os.makedirs(directory, exist_ok=True)
        self.directory = directory

    def _path(self, index: int) -> str:
        return os.path.join(self.directory, f"ckpt_{index:08d}.bin")

    def put(self, unit: CheckpointUnit) -> None:
        write_unit(self._path(unit.index), unit)

    def get(self, index: int) -> CheckpointUnit:
        return read_unit(self._path(index))

    def drop(self, index: int) -> None:
        os.remove(self._path(index))


# ---------------------------------------------------------------------------
# executing a schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckpointPolicy:
    capacity: int
    mode: str = "sol+stages"
    store: str = "memory"
    directory: Optional[str] = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("checkpoint capacity must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.store not in ("memory", "disk"):
            raise ValueError("store must be 'memory' or 'disk'")


class StepProvider:
    """Replays forward steps from checkpoints as the adjoint asks for them.

    ``run_forward`` performs the initial sweep and returns the cost;
    ``provide_step(n)`` must then be called for n = N-1, ..., 0.  With
    ``tangent=(w0, v2)`` the tangent is replayed alongside the state and
    attached to the records.
    """

    def __init__(self, problem: DAEProblem, objective: Optional[Objective], config: StepperConfig, p, u0,
                 schedule: CheckpointSchedule, store: str = "memory", directory=None, tangent=None):
        if schedule.num_steps != config.num_steps:
            raise ValueError("schedule and integrator disagree on the number of steps")
        self.problem = problem
        self.objective = objective
        self.config = config
        self.p = np.zeros(0) if p is None else np.asarray(p, dtype=float)
        self.schedule = schedule
        self._store = MemoryStore() if store == "memory" else DiskStore(directory)
        self._tableau = config.method if isinstance(config.method, RK4) else RK4()
        self._u = np.asarray(u0, dtype=float)
        self._q = 0.0
        self._v2 = None
        self._w = None
        if tangent is not None:
            self._w = np.asarray(tangent[0], dtype=float)
            self._v2 = np.asarray(tangent[1], dtype=float)
        self._record: Optional[StepRecord] = None
        self._cursor = 0
        self._next_adjoin = config.num_steps - 1
        self.steps_taken = 0
        self.cost: Optional[float] = None
        self.final_state: Optional[np.ndarray] = None
        self.final_tangent: Optional[np.ndarray] = None

    @classmethod
    def from_policy(cls, problem, objective, config, p, u0, policy: CheckpointPolicy, tangent=None):
        schedule = plan_schedule(config.num_steps, policy.capacity, policy.mode)
        return cls(problem, objective, config, p, u0, schedule, policy.store, policy.directory, tangent)

    @property
    def num_steps(self) -> int:
        return self.config.num_steps

    @property
    def recomputations(self) -> int:
        return self.steps_taken - self.num_steps

    def _advance(self, start: int, stop: int) -> None:
        for n in range(start, stop):
            rec = take_step(self.problem, self.objective, self.config, self.p, n, self._u, self._q)
            if self._w is not None:
                rec.w = self._w
                self._w, _ = tlm_step(self.problem, rec, self._w, self._v2, self.p, None, self._tableau)
                rec.w_next = self._w
            self._u, self._q, self._record = rec.u_next, rec.q_next, rec
            self.steps_taken += 1

    def _execute(self, a: Action) -> None:
        if a.kind == "advance":
            self._advance(a.index, a.target)
        elif a.kind == "store":
            self._store.put(CheckpointUnit(a.index, self._u, self._q, self._w,
                                           self._record if a.stages else None))
        elif a.kind == "restore":
            unit = self._store.get(a.index)
            if not a.keep:
                self._store.drop(a.index)
            self._u, self._q, self._w, self._record = unit.u, unit.q, unit.w, unit.record
        elif a.kind == "discard":
            self._store.drop(a.index)

    def run_forward(self) -> float:
        """Initial sweep up to the first adjoint step; returns the cost."""
        if self._cursor:
            raise RuntimeError("forward sweep already run")
        actions = self.schedule.actions
        while actions[self._cursor].kind != "adjoin":
            self._execute(actions[self._cursor])
            self._cursor += 1
        self.final_state = self._u
        self.final_tangent = self._w
        psi = 0.0 if self.objective is None else self.objective.psi(self._u, self.p)
        self.cost = psi + self._q
        return self.cost

    def provide_step(self, n: int) -> StepRecord:
        if self.cost is None:
            raise RuntimeError("call run_forward() before requesting records")
        if n != self._next_adjoin:
            raise RuntimeError(f"records must be requested in reverse order: expected {self._next_adjoin}, got {n}")
        actions = self.schedule.actions
        while True:
            a = actions[self._cursor]
            self._cursor += 1
            if a.kind == "adjoin":
                break
            self._execute(a)
        record = self._record
        if record is None or record.n != n:
            raise RuntimeError(f"schedule left no record for step {n}")
        # trailing discards belong to this step
        while self._cursor < len(actions) and actions[self._cursor].kind == "discard":
            self._execute(actions[self._cursor])
            self._cursor += 1
        self._next_adjoin -= 1
        return record
