"""Domain types and slot-clock primitives shared by every other module.

All quantities live on a slotted clock: counts are integers per slot, key
amounts are integer bits. A single simulation run owns its state; nothing
here is shared between concurrent runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum


class ConfigError(ValueError):
    """Invalid configuration value (CLI exit code 1)."""


class InvariantViolation(RuntimeError):
    """A runtime invariant was broken; the run must abort (CLI exit code 2)."""


class TrafficClass(IntEnum):
    PROT = 0
    DISP = 1
    MEAS = 2
    MKT = 3
    LOG = 4

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def critical(self) -> bool:
        return self in CRITICAL_CLASSES


_LABELS = {
    TrafficClass.PROT: "Prot",
    TrafficClass.DISP: "Disp",
    TrafficClass.MEAS: "Meas",
    TrafficClass.MKT: "Mkt",
    TrafficClass.LOG: "Log",
}

#: Fixed service priority order (rank 0 served first).
CLASS_ORDER = (
    TrafficClass.PROT,
    TrafficClass.DISP,
    TrafficClass.MEAS,
    TrafficClass.MKT,
    TrafficClass.LOG,
)

CRITICAL_CLASSES = frozenset({TrafficClass.PROT, TrafficClass.DISP})
NONCRITICAL_CLASSES = tuple(c for c in CLASS_ORDER if c not in CRITICAL_CLASSES)

N_CLASSES = len(CLASS_ORDER)

CLASS_BY_LABEL = {c.label: c for c in CLASS_ORDER}
CLASS_BY_LABEL.update({c.label.lower(): c for c in CLASS_ORDER})


@dataclass(frozen=True)
class ClockConfig:
    """Slot length and horizon of a run."""

    slot_length_s: float = 0.1
    horizon_slots: int = 36_000

    def __post_init__(self) -> None:
        if self.slot_length_s <= 0:
            raise ConfigError(f"slot_length_s must be > 0, got {self.slot_length_s}")
        if self.horizon_slots < 0:
            raise ConfigError(f"horizon_slots must be >= 0, got {self.horizon_slots}")

    @property
    def horizon_s(self) -> float:
        return self.horizon_slots * self.slot_length_s


def derive_tau(d_max_s: float, slot_length_s: float) -> int:
    """Discrete survival horizon: floor(d_max / slot_length), clamped to >= 1.

    The clamp keeps sub-slot deadlines (e.g. 150 ms at 100 ms slots)
    servable in the slot after arrival instead of unservable.
    """
    if d_max_s <= 0 or slot_length_s <= 0:
        raise ConfigError(
            f"d_max and slot length must be > 0, got ({d_max_s}, {slot_length_s})"
        )
    return max(1, int(d_max_s / slot_length_s))


@dataclass(frozen=True)
class ClassSpec:
    """Static per-class parameters. tau is derived from d_max and the slot length."""

    cls: TrafficClass
    d_max_s: float
    k_otp: int
    k_aes: int
    theta: float
    lambda_w: float
    mu_w: float
    w: float
    bucket_cap: float
    priority_rank: int
    q_max: int | None = None
    slot_length_s: float = 0.1
    tau: int = field(init=False)

    def __post_init__(self) -> None:
        if not 0 < self.k_aes < self.k_otp:
            raise ConfigError(
                f"{self.cls.label}: need 0 < k_aes < k_otp, got ({self.k_aes}, {self.k_otp})"
            )
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"{self.cls.label}: theta must be in [0, 1], got {self.theta}")
        if self.lambda_w < 0 or self.mu_w < 0:
            raise ConfigError(f"{self.cls.label}: lambda_w/mu_w must be >= 0")
        if self.w <= 0:
            raise ConfigError(f"{self.cls.label}: importance weight w must be > 0")
        if self.bucket_cap < 0:
            raise ConfigError(f"{self.cls.label}: bucket_cap must be >= 0")
        if self.q_max is not None and self.q_max < 0:
            raise ConfigError(f"{self.cls.label}: q_max must be >= 0")
        object.__setattr__(self, "tau", derive_tau(self.d_max_s, self.slot_length_s))

    @property
    def critical(self) -> bool:
        return self.cls in CRITICAL_CLASSES


def validate_specs(specs: dict[TrafficClass, ClassSpec]) -> None:
    if set(specs) != set(CLASS_ORDER):
        raise ConfigError("class specs must cover exactly the five traffic classes")
    ranks = sorted((s.priority_rank, s.cls) for s in specs.values())
    expected = [specs[c].priority_rank for c in CLASS_ORDER]
    if expected != sorted(expected) or len(set(expected)) != N_CLASSES:
        raise ConfigError(
            "priority ranks must be a total order Prot < Disp < Meas < Mkt < Log"
        )
    del ranks


# Messages are plain tuples in the hot path: (msg_id, arrival_slot, emergency).
# msg_id is monotone per run, giving deterministic FIFO tie-breaking.
Message = tuple[int, int, bool]


class ClassQueue:
    """FIFO queue of one class, ordered by arrival slot (then id)."""

    __slots__ = ("cls", "items")

    def __init__(self, cls: TrafficClass) -> None:
        self.cls = cls
        self.items: deque[Message] = deque()

    def __len__(self) -> int:
        return len(self.items)

    def push(self, msg: Message) -> None:
        if self.items and msg[1] < self.items[-1][1]:
            raise InvariantViolation(
                f"{self.cls.label}: arrival slots must be non-decreasing"
            )
        self.items.append(msg)

    def head(self) -> Message | None:
        return self.items[0] if self.items else None

    def pop_head(self) -> Message:
        return self.items.popleft()

    def expire_older_than(self, slot: int, tau: int) -> list[Message]:
        """Remove messages with no remaining service opportunity.

        A message arriving at slot a can be served while slot - a <= tau,
        so one that is still queued with slot - a >= tau at end of slot can
        never be served and is timed out.
        """
        expired: list[Message] = []
        items = self.items
        while items and slot - items[0][1] >= tau:
            expired.append(items.popleft())
        return expired


def step_queue(q: int, served: int, expired: int, arrivals: int) -> int:
    """One step of the queue recursion Q' = Q - S - E + A."""
    if served < 0 or expired < 0 or arrivals < 0 or q < 0:
        raise InvariantViolation("queue recursion inputs must be non-negative")
    if served + expired > q:
        raise InvariantViolation(
            f"cannot remove {served}+{expired} messages from a queue of {q}"
        )
    return q - served - expired + arrivals


def step_inventory(k: int, generated: int, spend: int) -> int:
    """One step of the key inventory recursion K' = K + G - spend."""
    if k < 0 or generated < 0 or spend < 0:
        raise InvariantViolation("inventory recursion inputs must be non-negative")
    if spend > k + generated:
        raise InvariantViolation(
            f"key spend {spend} exceeds available {k} + {generated}"
        )
    return k + generated - spend


class SlotLedger:
    """Columnar per-slot audit trail of realized quantities.

    Per class and slot: raw arrivals, admitted arrivals, emergency-demand
    count, regular/preemptive serves, passive expirations, the three active
    drop causes (down-sampling skip, soft drop, predictive drop), and the
    end-of-slot queue length. Per slot: key production, inventory and reserve
    book-ends, and spend split by funding source.
    """

    SCALAR_FIELDS = ("g", "k_start", "k_end", "r_start", "r_end", "ktilde_end",
                     "spend_regular", "spend_reserve")
    CLASS_FIELDS = ("a_raw", "a_adm", "a_emg", "s_reg", "s_pre", "e",
                    "d_down", "d_soft", "d_pred", "q_end", "tb", "u", "mode", "m")

    def __init__(self) -> None:
        def per_class() -> dict[TrafficClass, list]:
            return {c: [] for c in CLASS_ORDER}

        self.regime: list[str] = []
        self.g: list[int] = []
        self.k_start: list[int] = []
        self.k_end: list[int] = []
        self.r_start: list[int] = []
        self.r_end: list[int] = []
        self.ktilde_end: list[int] = []
        self.spend_regular: list[int] = []
        self.spend_reserve: list[int] = []
        self.a_raw = per_class()
        self.a_adm = per_class()
        self.a_emg = per_class()
        self.s_reg = per_class()
        self.s_pre = per_class()
        self.e = per_class()
        self.d_down = per_class()
        self.d_soft = per_class()
        self.d_pred = per_class()
        self.q_end = per_class()
        self.tb = per_class()
        self.u = per_class()
        self.mode = per_class()
        self.m = per_class()

    @property
    def n_slots(self) -> int:
        return len(self.regime)

    def d_active(self, cls: TrafficClass) -> list[int]:
        return [a + b + c for a, b, c in
                zip(self.d_down[cls], self.d_soft[cls], self.d_pred[cls])]

    def s_total(self, cls: TrafficClass) -> list[int]:
        return [a + b for a, b in zip(self.s_reg[cls], self.s_pre[cls])]

    def check_conservation(self, final_queue_len: dict[TrafficClass, int]) -> None:
        """Served + discarded + final backlog must equal raw arrivals."""
        for c in CLASS_ORDER:
            arrivals = sum(self.a_raw[c])
            accounted = (sum(self.s_reg[c]) + sum(self.s_pre[c]) + sum(self.e[c])
                         + sum(self.d_down[c]) + sum(self.d_soft[c])
                         + sum(self.d_pred[c]) + final_queue_len[c])
            if arrivals != accounted:
                raise InvariantViolation(
                    f"{c.label}: {arrivals} arrivals but {accounted} accounted for"
                )

    def check_replay(self) -> None:
        """Queue lengths must replay through the queue recursion exactly.

        Service and expiry act on the pre-arrival population; the soft and
        predictive drops run after the slot's arrivals append, so they may
        remove same-slot admissions. Down-sampling skips never enter the
        queue.
        """
        for c in CLASS_ORDER:
            q = 0
            for t in range(self.n_slots):
                served = self.s_reg[c][t] + self.s_pre[c][t]
                if served + self.e[c][t] > q:
                    raise InvariantViolation(
                        f"{c.label}: slot {t} removes more than the queue held"
                    )
                q = (q + self.a_adm[c][t] - served - self.e[c][t]
                     - self.d_soft[c][t] - self.d_pred[c][t])
                if q < 0 or q != self.q_end[c][t]:
                    raise InvariantViolation(
                        f"{c.label}: replay mismatch at slot {t}: {q} != {self.q_end[c][t]}"
                    )

    def check_budget(self) -> None:
        """Per-slot spend must fit within K(t) + G(t); K never negative."""
        for t in range(self.n_slots):
            spend = self.spend_regular[t] + self.spend_reserve[t]
            if spend > self.k_start[t] + self.g[t]:
                raise InvariantViolation(f"slot {t}: spend {spend} over budget")
            if self.k_end[t] < 0:
                raise InvariantViolation(f"slot {t}: negative inventory")


@dataclass
class KeyPool:
    """Key inventory with an emergency earmark for critical classes.

    The reserve is an accounting earmark: regular service may only touch
    max(0, K - R_emg), while preemption debits the reserve directly but can
    never overdraw the physical inventory (K >= 0 always).
    """

    k: int
    r_emg: int
    r_min: int
    r_max: int
    beta: float

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ConfigError("initial key inventory must be >= 0")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must be in [0, 1), got {self.beta}")
        if self.r_min > self.r_max:
            raise ConfigError(f"need r_min <= r_max, got ({self.r_min}, {self.r_max})")
        if self.r_min < 0:
            raise ConfigError("r_min must be >= 0")

    @property
    def regular(self) -> int:
        """Regular remainder available to all classes through arbitration."""
        return max(0, self.k - self.r_emg)

    def add(self, generated: int) -> None:
        self.k += generated

    def spend_regular(self, bits: int) -> None:
        if bits > self.regular:
            raise InvariantViolation(
                f"regular spend {bits} exceeds remainder {self.regular}"
            )
        self.k -= bits

    def spend_reserve(self, bits: int) -> None:
        if bits > self.r_emg or bits > self.k:
            raise InvariantViolation(
                f"reserve spend {bits} exceeds reserve {self.r_emg} or pool {self.k}"
            )
        self.r_emg -= bits
        self.k -= bits
