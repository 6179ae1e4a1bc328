"""Atomic action execution over an emulated non-volatile store."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ..core import ActionKind, ContractViolation
from ..energy import Capacitor, CostTable, EnergyLedger, HarvesterTrace, can_execute, next_wakeup, step_detailed

PROGRESS_SLOT = "__progress__"


class NvStore:
    """Named non-volatile slots holding byte strings.

    The store is treated as a value: :meth:`apply` returns a new store and the
    original is left untouched, so a snapshot is just a reference.
    """

    __slots__ = ("_slots",)

    def __init__(self, slots: Optional[Mapping[str, bytes]] = None):
        slots = dict(slots or {})
        for k, v in slots.items():
            if not isinstance(k, str) or not isinstance(v, (bytes, bytearray)):
                raise ContractViolation(f"slot {k!r}: names must be str and values bytes")
        self._slots = {k: bytes(v) for k, v in slots.items()}

    def __getitem__(self, name: str) -> bytes:
        return self._slots[name]

    def get(self, name: str, default=None):
        return self._slots.get(name, default)

    def __contains__(self, name):
        return name in self._slots

    def __iter__(self):
        return iter(sorted(self._slots))

    def __len__(self):
        return len(self._slots)

    def __eq__(self, other):
        if not isinstance(other, NvStore):
            return NotImplemented
        return self._slots == other._slots

    __hash__ = None

    def __repr__(self):
        return f"NvStore({len(self._slots)} slots, digest={self.digest()[:12]})"

    def view(self) -> Mapping[str, bytes]:
        return MappingProxyType(self._slots)

    def apply(self, delta: Mapping[str, Optional[bytes]]) -> "NvStore":
        """New store with ``delta`` written; a ``None`` value deletes the slot."""
        slots = dict(self._slots)
        for k, v in delta.items():
            if v is None:
                slots.pop(k, None)
            else:
                slots[k] = v
        return NvStore(slots)

    def digest(self) -> str:
        h = hashlib.sha256()
        for k in sorted(self._slots):
            v = self._slots[k]
            h.update(len(k).to_bytes(4, "little") + k.encode() + len(v).to_bytes(8, "little") + v)
        return h.hexdigest()


StepFn = Callable[[Mapping[str, bytes], dict], tuple]


@dataclass(frozen=True)
class SubStep:
    """One split fragment of an action.

    ``fn(store_view, scratch) -> (delta, scratch)``. The store view is
    read-only, ``scratch`` is volatile and starts empty after every sleep.
    """

    cost_key: tuple
    fn: StepFn
    name: str = ""


@dataclass(frozen=True)
class ActionProgram:
    kind: ActionKind
    sub_steps: tuple
    example_id: Optional[int] = None

    def __post_init__(self):
        if not self.sub_steps:
            raise ContractViolation("an action program needs at least one sub-step")
        object.__setattr__(self, "sub_steps", tuple(self.sub_steps))


class Status(enum.Enum):
    Completed = "completed"
    PowerFailedRestart = "power_failed_restart"


@dataclass(frozen=True)
class ExecutionOutcome:
    status: Status
    energy_used: float
    time_used: float  # milliseconds
    sleeps: int = 0
    substeps_run: int = 0


class TraceExhausted(Exception):
    """The harvester trace (or simulation horizon) ended while waiting for energy.

    ``store`` is the NV store as it was before the interrupted action.
    """

    def __init__(self, store: NvStore, cap: Capacitor, t: float):
        super().__init__(f"trace exhausted at t={t:.3f}s")
        self.store = store
        self.cap = cap
        self.t = t


class FaultInjector:
    """Power-failure times: a scripted list plus optional exponential arrivals.

    Faults only matter while the device runs; a fault whose time passes while
    the device sleeps is dropped.
    """

    def __init__(self, times: Sequence[float] = (), rate_per_s: float = 0.0, rng=None):
        if rate_per_s < 0:
            raise ContractViolation("fault rate must be non-negative")
        self._scripted = sorted(float(t) for t in times)
        self.rate = rate_per_s
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._next_random = self._draw(0.0)
        self.fired = 0

    def _draw(self, t: float) -> float:
        if self.rate <= 0:
            return float("inf")
        return t + float(self._rng.exponential(1.0 / self.rate))

    def _next(self) -> float:
        s = self._scripted[0] if self._scripted else float("inf")
        return min(s, self._next_random)

    def _consume(self):
        if self._scripted and self._scripted[0] <= self._next_random:
            self._scripted.pop(0)
        else:
            self._next_random = self._draw(self._next_random)

    def poll(self, t0: float, t1: float) -> Optional[float]:
        """First fault time in ``[t0, t1)`` (consumed), dropping any before ``t0``."""
        while self._next() < t0:
            self._consume()
        f = self._next()
        if f < t1:
            self._consume()
            self.fired += 1
            return f
        return None


def _progress(store: NvStore, prog: ActionProgram) -> int:
    raw = store.get(PROGRESS_SLOT)
    if raw is None:
        return 0
    kind, eid, idx = raw.decode().split(":")
    if kind != prog.kind.value or (eid != "" and prog.example_id is not None and int(eid) != prog.example_id):
        raise ContractViolation(f"store holds progress of another action ({raw.decode()})")
    return int(idx)


def _progress_value(prog: ActionProgram, idx: int) -> bytes:
    eid = "" if prog.example_id is None else str(prog.example_id)
    return f"{prog.kind.value}:{eid}:{idx}".encode()


def execute_action(
    prog: ActionProgram,
    store: NvStore,
    cap: Capacitor,
    trace: HarvesterTrace,
    t: float,
    costs: CostTable,
    faults: Optional[FaultInjector] = None,
    ledger: Optional[EnergyLedger] = None,
    log: Optional[Callable] = None,
    until: Optional[float] = None,
    force_sleep: bool = False,
    decision: str = "",
) -> tuple[ExecutionOutcome, NvStore, Capacitor, float]:
    """Run ``prog`` to completion or to an injected power failure.

    Sub-steps commit one at a time together with a progress marker. When the
    next sub-step is unaffordable the device sleeps until it is (committed
    progress survives, scratch does not). An injected fault discards every
    delta of this attempt and returns the store as it was before the action.
    ``force_sleep`` sleeps at every sub-step boundary regardless of energy.

    Raises
    ------
    TraceExhausted
        If energy never returns before the trace (or ``until``) ends.
    """
    ledger = ledger if ledger is not None else EnergyLedger(initial=cap.energy_mj)
    horizon = trace.end if until is None else min(until, trace.end)
    snapshot = store
    idx = _progress(store, prog)
    if idx >= len(prog.sub_steps):
        raise ContractViolation("progress marker points past the last sub-step")
    scratch: dict = {}
    used_e = used_ms = 0.0
    sleeps = run = 0
    n = len(prog.sub_steps)
    forced = False

    def sleep_until_affordable(energy, min_s=0.0):
        nonlocal cap, t
        t_w = next_wakeup(cap, trace, t, energy)
        if t_w is not None:
            t_w = max(t_w, t + min_s)
        if t_w is None or t_w > horizon:
            raise TraceExhausted(snapshot, cap, t)
        if t_w > t:
            cap = ledger.add(step_detailed(cap, trace, t, t_w - t, 0.0))
        t = t_w

    while idx < n:
        sub = prog.sub_steps[idx]
        cost = costs.cost(*sub.cost_key)
        if forced or not can_execute(cap, cost.energy_mj):
            sleep_until_affordable(cost.energy_mj, min_s=1e-3 if forced else 0.0)
            scratch = {}
            sleeps += 1
            forced = False
            if not can_execute(cap, cost.energy_mj):
                continue
        dur = cost.duration_s
        before = cap.energy_mj
        fault_at = faults.poll(t, t + dur) if faults is not None else None
        label = (prog.kind, idx, prog.example_id)
        if fault_at is not None:
            frac = (fault_at - t) / dur
            cap = ledger.add(step_detailed(cap, trace, t, fault_at - t, cost.energy_mj * frac), label)
            used_e += cost.energy_mj * frac
            used_ms += (fault_at - t) * 1000.0
            t = fault_at
            if log is not None:
                log(t, prog.kind.value, idx, prog.example_id, before, cap.energy_mj, "fault", decision)
            return ExecutionOutcome(Status.PowerFailedRestart, used_e, used_ms, sleeps, run), snapshot, cap, t
        delta, scratch = sub.fn(store.view(), scratch)
        delta = dict(delta)
        delta[PROGRESS_SLOT] = _progress_value(prog, idx + 1) if idx + 1 < n else None
        store = store.apply(delta)
        cap = ledger.add(step_detailed(cap, trace, t, dur, cost.energy_mj), label)
        t_start, t = t, t + dur
        used_e += cost.energy_mj
        used_ms += cost.duration_ms
        run += 1
        if log is not None:
            outcome = "done" if idx + 1 == n else "commit"
            log(t_start, prog.kind.value, idx, prog.example_id, before, cap.energy_mj, outcome, decision)
        idx += 1
        forced = force_sleep
    return ExecutionOutcome(Status.Completed, used_e, used_ms, sleeps, run), store, cap, t
