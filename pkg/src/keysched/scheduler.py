"""Arbitration pipeline: forecasts, quota tokens, key-aware service,
emergency reserve, graceful degradation, and drop policy.

One interface covers the full key-aware method, the three baselines, and the
ablation variants. All operations are deterministic transitions of explicit
state; the engine fixes their per-slot order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .core import (
    CLASS_ORDER,
    CRITICAL_CLASSES,
    NONCRITICAL_CLASSES,
    ClassQueue,
    ClassSpec,
    ConfigError,
    InvariantViolation,
    KeyPool,
    Message,
    TrafficClass,
)

MODE_OTP = 0
MODE_AES = 1


class MethodKind(Enum):
    FIFO = "fifo"
    FIXED_PRIORITY = "priority"
    STATIC_QUOTA_PRIORITY = "staticquota"
    KEY_AWARE_FULL = "ours"


@dataclass(frozen=True)
class Method:
    """Scheduling method plus ablation switches (full method only)."""

    kind: MethodKind
    no_forecast: bool = False
    no_reserve: bool = False
    no_degradation: bool = False
    wrr_arbiter: bool = False

    def __post_init__(self) -> None:
        flags = (self.no_forecast, self.no_reserve, self.no_degradation, self.wrr_arbiter)
        if any(flags) and self.kind is not MethodKind.KEY_AWARE_FULL:
            raise ConfigError("ablation flags are only valid with the full method")

    @property
    def uses_buckets(self) -> bool:
        return self.kind in (MethodKind.STATIC_QUOTA_PRIORITY, MethodKind.KEY_AWARE_FULL)

    @property
    def uses_reserve(self) -> bool:
        return self.kind is MethodKind.KEY_AWARE_FULL and not self.no_reserve

    @property
    def uses_degradation(self) -> bool:
        return self.kind is MethodKind.KEY_AWARE_FULL and not self.no_degradation


@dataclass
class ForecastState:
    """EWMA one-step predictions of key production and raw arrivals."""

    alpha: float
    g_hat: float
    a_hat: dict[TrafficClass, float]

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.g_hat < 0 or any(v < 0 for v in self.a_hat.values()):
            raise ConfigError("forecasts must be >= 0")


def ewma_update(prev_hat: float, observed: float, alpha: float) -> float:
    """One EWMA step; alpha = 1 degenerates to tracking the last observation."""
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must be in (0, 1], got {alpha}")
    if prev_hat < 0 or observed < 0:
        raise ConfigError("EWMA inputs must be >= 0")
    return alpha * observed + (1.0 - alpha) * prev_hat


def forecast_available_keys(k: int, g_hat_next: float, r_emg: int) -> float:
    """Forecast of next-slot regular keys; may be negative, clamped downstream."""
    if k < 0 or g_hat_next < 0 or r_emg < 0:
        raise ConfigError("forecast inputs must be >= 0")
    return k + g_hat_next - r_emg


def compute_token_rates(k_avail_hat: float, demand_hat: dict[TrafficClass, float],
                        costs: dict[TrafficClass, int], weights: dict[TrafficClass, float],
                        rho: float) -> dict[TrafficClass, float]:
    """Guard-banded proportional token rates.

    q_c = rho * max(0, K_hat) * (w_c k_c A_hat_c / sum_j w_j k_j A_hat_j) / k_c,
    so the implied key budget sum_c k_c q_c never exceeds rho * max(0, K_hat).
    """
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"rho must be in (0, 1), got {rho}")
    budget = rho * max(0.0, k_avail_hat)
    denom = sum(weights[c] * costs[c] * demand_hat[c] for c in demand_hat)
    if denom <= 0.0:
        return {c: 0.0 for c in demand_hat}
    return {
        c: budget * (weights[c] * costs[c] * demand_hat[c] / denom) / costs[c]
        for c in demand_hat
    }


@dataclass
class TokenBucket:
    level: float
    cap: float

    def __post_init__(self) -> None:
        if self.cap < 0 or not 0 <= self.level <= self.cap:
            raise ConfigError("need 0 <= level <= cap")


def refill_bucket(bucket: TokenBucket, q: float) -> None:
    if q < 0:
        raise ConfigError("token rate must be >= 0")
    bucket.level = min(bucket.cap, bucket.level + q)


@dataclass
class DegradationState:
    """Hysteretic OTP/AES mode and integer down-sampling per class.

    Down-sampling works one notch deeper than mode switching: the factor
    escalates only when the remainder falls to m_low (default: the soft-drop
    threshold) and relaxes once it recovers to m_high (default: the AES
    threshold). Tying both mechanisms to the same band makes the multiplier
    spike on every boundary touch even when mode switching alone already
    balances the budget.
    """

    h_up: int
    h_down: int
    h_drop: int
    m_max: int
    gamma_up: float
    gamma_down: float
    m_low: int = -1
    m_high: int = -1
    downsample_classes: tuple[TrafficClass, ...] = NONCRITICAL_CLASSES
    mode: dict[TrafficClass, int] = field(
        default_factory=lambda: {c: MODE_OTP for c in CLASS_ORDER}
    )
    m: dict[TrafficClass, int] = field(default_factory=lambda: {c: 1 for c in CLASS_ORDER})

    def __post_init__(self) -> None:
        if not self.h_down < self.h_up:
            raise ConfigError("hysteresis band must be non-empty (h_down < h_up)")
        if self.m_max < 1:
            raise ConfigError("m_max must be >= 1")
        if self.gamma_up < 1 or self.gamma_down < 1:
            raise ConfigError("gamma factors must be >= 1")
        if any(c in CRITICAL_CLASSES for c in self.downsample_classes):
            raise ConfigError("critical classes cannot be down-sampled")
        if self.m_low < 0:
            self.m_low = self.h_drop
        if self.m_high < 0:
            self.m_high = self.h_down
        if self.m_low >= self.m_high:
            raise ConfigError("need m_low < m_high")

    def k_eff(self, specs: dict[TrafficClass, ClassSpec]) -> dict[TrafficClass, int]:
        return {
            c: specs[c].k_aes if self.mode[c] == MODE_AES else specs[c].k_otp
            for c in CLASS_ORDER
        }


def update_mode(k_tilde: int, deg: DegradationState) -> list[TrafficClass]:
    """Apply the three-branch hysteresis; returns classes whose mode flipped.

    Critical classes never take the AES branch.
    """
    flipped: list[TrafficClass] = []
    for c in CLASS_ORDER:
        prev = deg.mode[c]
        if k_tilde >= deg.h_up:
            new = MODE_OTP
        elif k_tilde <= deg.h_down and c not in CRITICAL_CLASSES:
            new = MODE_AES
        else:
            new = prev
        if new != prev:
            deg.mode[c] = new
            flipped.append(c)
    return flipped


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def update_downsampling(k_tilde: int, deg: DegradationState) -> None:
    """Three-branch integer down-sampling update for the configured
    non-critical classes."""
    for c in deg.downsample_classes:
        m = deg.m[c]
        if k_tilde <= deg.m_low:
            deg.m[c] = min(deg.m_max, _round_half_up(deg.gamma_up * m))
        elif k_tilde >= deg.m_high:
            deg.m[c] = max(1, _round_half_up(m / deg.gamma_down))


@dataclass
class VirtualQueueState:
    """Quota virtual queues soft-enforcing the long-term share constraints."""

    u: dict[TrafficClass, float]
    v: float = 50.0

    def __post_init__(self) -> None:
        if self.v <= 0:
            raise ConfigError("penalty weight V must be > 0")
        if any(x < 0 for x in self.u.values()):
            raise ConfigError("virtual queues must be >= 0")


def update_virtual_queue(u: float, arrivals: int, served: int, theta: float) -> float:
    """U' = max(0, U + theta*A - S)."""
    if u < 0 or arrivals < 0 or served < 0 or theta < 0:
        raise ConfigError("virtual queue inputs must be >= 0")
    return max(0.0, u + theta * arrivals - served)


def lyapunov_value(q: dict[TrafficClass, int] | list[int],
                   u: dict[TrafficClass, float] | list[float]) -> float:
    """L = 0.5 * sum Q^2 + 0.5 * sum U^2, logged for drift diagnostics."""
    qv = q.values() if isinstance(q, dict) else q
    uv = u.values() if isinstance(u, dict) else u
    return 0.5 * sum(x * x for x in qv) + 0.5 * sum(x * x for x in uv)


def resize_reserve(k: int, g: int, beta: float, r_min: int, r_max: int) -> int:
    """Clipped proportional reserve: clip(beta*(K+G), r_min, r_max)."""
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"beta must be in [0, 1), got {beta}")
    if r_min > r_max:
        raise ConfigError(f"need r_min <= r_max, got ({r_min}, {r_max})")
    return max(r_min, min(int(beta * (k + g)), r_max))


@dataclass
class ServeEvent:
    cls: TrafficClass
    msg: Message
    wait: int


@dataclass
class ArbitrationResult:
    served: dict[TrafficClass, list[Message]]
    spend_regular: int = 0


def critical_eligible_counts(slot: int, queues: dict[TrafficClass, ClassQueue],
                             specs: dict[TrafficClass, ClassSpec],
                             ttl_threshold: int = 1) -> dict[TrafficClass, int]:
    """Head-of-line critical packets requiring immediate service this slot
    (emergency-flagged or within the TTL threshold), per class.

    Measured before arbitration, this is the slot's immediate critical
    demand: it feeds the emergency-demand ledger column and the within-slot
    liens that stop lower-priority service from spending the keys this
    demand is entitled to."""
    counts = {}
    for c in CRITICAL_CLASSES:
        tau = specs[c].tau
        n = 0
        for msg in queues[c].items:
            remaining = tau - (slot - msg[1])
            if msg[2] or remaining <= ttl_threshold:
                n += 1
            else:
                break
        counts[c] = n
    return counts


def critical_liens(eligible: dict[TrafficClass, int],
                   k_eff: dict[TrafficClass, int]) -> dict[TrafficClass, int]:
    """Per-class key floors implied by the immediate critical demand: each
    class must leave intact the eligible demand of strictly higher-priority
    critical classes; non-critical classes must leave all of it."""
    floors: dict[TrafficClass, int] = {}
    running = 0
    for c in CLASS_ORDER:
        if c in CRITICAL_CLASSES:
            floors[c] = running
            running += k_eff[c] * eligible.get(c, 0)
        else:
            floors[c] = running
    return floors


def _can_serve_regular(slot: int, queue: ClassQueue, bucket: TokenBucket | None,
                       pool: KeyPool, cost: int, tau: int, floor: int = 0) -> bool:
    head = queue.head()
    if head is None:
        return False
    if bucket is not None and bucket.level < 1.0:
        return False
    if pool.regular < cost + floor:
        return False
    age = slot - head[1]
    if age > tau:
        raise InvariantViolation("aged-out message found at service time")
    return True


def _serve_one(queue: ClassQueue, bucket: TokenBucket | None, pool: KeyPool,
               cost: int) -> Message:
    msg = queue.pop_head()
    if bucket is not None:
        bucket.level -= 1.0
    pool.spend_regular(cost)
    return msg


def arbitrate_slot(slot: int, queues: dict[TrafficClass, ClassQueue], pool: KeyPool,
                   buckets: dict[TrafficClass, TokenBucket] | None,
                   k_eff: dict[TrafficClass, int], specs: dict[TrafficClass, ClassSpec],
                   method: Method, floors: dict[TrafficClass, int] | None = None,
                   static_crit_floor: int = 0) -> ArbitrationResult:
    """Regular (non-preemptive) service for one slot. Mutates queues, buckets
    and the pool; returns the served messages per class.

    Full method and both priority baselines sweep classes in priority order,
    draining each while its gate holds, and repeat the sweep until no class
    can serve (work-conserving). FIFO serves strictly in global arrival order
    and blocks on an unaffordable head. floors withhold key bits per class:
    the full method's within-slot liens for preemption-eligible critical
    heads; static_crit_floor is the static baseline's constant critical
    reservation.
    """
    result = ArbitrationResult(served={c: [] for c in CLASS_ORDER})

    if method.kind is MethodKind.FIFO:
        _arbitrate_fifo(slot, queues, pool, k_eff, specs, result)
        return result
    if method.kind is MethodKind.STATIC_QUOTA_PRIORITY:
        _arbitrate_static(slot, queues, pool, buckets, k_eff, specs, result,
                          static_crit_floor)
        return result
    if method.kind is MethodKind.KEY_AWARE_FULL and method.wrr_arbiter:
        _arbitrate_wrr(slot, queues, pool, buckets, k_eff, specs, result, floors)
        return result

    progressed = True
    while progressed:
        progressed = False
        for c in CLASS_ORDER:
            queue = queues[c]
            bucket = buckets[c] if buckets is not None else None
            cost = k_eff[c]
            tau = specs[c].tau
            floor = floors.get(c, 0) if floors else 0
            while _can_serve_regular(slot, queue, bucket, pool, cost, tau, floor):
                msg = _serve_one(queue, bucket, pool, cost)
                result.served[c].append(msg)
                result.spend_regular += cost
                progressed = True
    return result


def _arbitrate_static(slot: int, queues: dict[TrafficClass, ClassQueue], pool: KeyPool,
                      buckets: dict[TrafficClass, TokenBucket] | None,
                      k_eff: dict[TrafficClass, int], specs: dict[TrafficClass, ClassSpec],
                      result: ArbitrationResult, crit_floor: int) -> None:
    """Static quota plus priorities: constant-rate quota floors, then a
    work-conserving priority sweep over the surplus.

    Critical classes hold first claim and may spend the whole remainder;
    remaining non-critical service must leave the constant critical key
    floor intact (the static counterpart of an adaptive emergency reserve).
    Token-gated quota floors are honored only for the micro-volume batch
    classes, cheapest first, and may dip into the reservation (their share
    is ~1% of famine supply); the telemetry class takes the surplus sweep
    first among non-criticals anyway, and a reserved floor for it would
    consume both the reservation and the sub-cost scraps that feed the
    batch classes. The surplus phase is token-free.
    """
    crit_first = [c for c in CLASS_ORDER if c in CRITICAL_CLASSES]
    floor_order = crit_first + [TrafficClass.LOG, TrafficClass.MKT]
    for c in floor_order:
        queue = queues[c]
        cost = k_eff[c]
        tau = specs[c].tau
        if c in CRITICAL_CLASSES:
            while _can_serve_regular(slot, queue, None, pool, cost, tau):
                result.served[c].append(_serve_one(queue, None, pool, cost))
                result.spend_regular += cost
        else:
            bucket = buckets[c] if buckets is not None else None
            while _can_serve_regular(slot, queue, bucket, pool, cost, tau):
                result.served[c].append(_serve_one(queue, bucket, pool, cost))
                result.spend_regular += cost
    for c in CLASS_ORDER:
        queue = queues[c]
        cost = k_eff[c]
        tau = specs[c].tau
        # the reservation gates the high-volume telemetry class only; the
        # batch classes' flows are ~1% of supply and pass beneath it
        floor = crit_floor if c is TrafficClass.MEAS else 0
        while _can_serve_regular(slot, queue, None, pool, cost, tau, floor):
            result.served[c].append(_serve_one(queue, None, pool, cost))
            result.spend_regular += cost


def _arbitrate_fifo(slot: int, queues: dict[TrafficClass, ClassQueue], pool: KeyPool,
                    k_eff: dict[TrafficClass, int], specs: dict[TrafficClass, ClassSpec],
                    result: ArbitrationResult) -> None:
    # Global arrival order via monotone message ids; head-of-line blocking on
    # key shortage (no skipping): the naive baseline.
    while True:
        best: TrafficClass | None = None
        best_id = -1
        for c in CLASS_ORDER:
            head = queues[c].head()
            if head is not None and (best is None or head[0] < best_id):
                best = c
                best_id = head[0]
        if best is None:
            return
        cost = k_eff[best]
        if pool.regular < cost:
            return
        age = slot - queues[best].head()[1]
        if age > specs[best].tau:
            raise InvariantViolation("aged-out message found at service time")
        msg = _serve_one(queues[best], None, pool, cost)
        result.served[best].append(msg)
        result.spend_regular += cost


def _arbitrate_wrr(slot: int, queues: dict[TrafficClass, ClassQueue], pool: KeyPool,
                   buckets: dict[TrafficClass, TokenBucket] | None,
                   k_eff: dict[TrafficClass, int], specs: dict[TrafficClass, ClassSpec],
                   result: ArbitrationResult,
                   floors: dict[TrafficClass, int] | None = None) -> None:
    # Ablation arbiter: cyclic visits with per-class quanta instead of strict
    # priority; the three-condition gate is unchanged.
    quanta = {c: max(1, round(specs[c].w)) for c in CLASS_ORDER}
    progressed = True
    while progressed:
        progressed = False
        for c in CLASS_ORDER:
            queue = queues[c]
            bucket = buckets[c] if buckets is not None else None
            cost = k_eff[c]
            tau = specs[c].tau
            floor = floors.get(c, 0) if floors else 0
            for _ in range(quanta[c]):
                if not _can_serve_regular(slot, queue, bucket, pool, cost, tau,
                                          floor):
                    break
                msg = _serve_one(queue, bucket, pool, cost)
                result.served[c].append(msg)
                result.spend_regular += cost
                progressed = True


@dataclass
class PreemptionResult:
    served: dict[TrafficClass, list[Message]]
    reserve_spend: int = 0
    fallback_spend: int = 0
    # Preemption-eligible packets seen this slot (served or not): the level
    # count of critical demand requiring immediate service.
    eligible: dict[TrafficClass, int] = field(default_factory=dict)


def preempt_critical(slot: int, queues: dict[TrafficClass, ClassQueue], pool: KeyPool,
                     k_eff: dict[TrafficClass, int], specs: dict[TrafficClass, ClassSpec],
                     ttl_threshold: int = 1) -> PreemptionResult:
    """Reserve-funded service of critical heads that regular arbitration left
    behind: emergency-flagged packets and heads at the TTL cliff.

    Runs after regular arbitration so the reserve stays a last resort. Token
    buckets are not debited. When the reserve cannot fund an eligible head but
    regular keys physically remain, the head is served from the remainder
    (token-free) rather than letting a critical message expire; reserve
    exclusivity is unaffected because reserve bits still flow only to
    critical classes.
    """
    result = PreemptionResult(served={c: [] for c in CRITICAL_CLASSES})
    for c in CLASS_ORDER:
        if c not in CRITICAL_CLASSES:
            continue
        queue = queues[c]
        tau = specs[c].tau
        cost = k_eff[c]
        eligible = 0
        for msg in queue.items:
            remaining = tau - (slot - msg[1])
            if msg[2] or remaining <= ttl_threshold:
                eligible += 1
            else:
                break
        result.eligible[c] = eligible
        for _ in range(eligible):
            # reserve first; the regular remainder tops up the balance so a
            # deadline rescue can combine both pools for one message
            if pool.k < cost or pool.r_emg + pool.regular < cost:
                break
            from_reserve = min(pool.r_emg, cost)
            if from_reserve:
                pool.spend_reserve(from_reserve)
                result.reserve_spend += from_reserve
            balance = cost - from_reserve
            if balance:
                pool.spend_regular(balance)
                result.fallback_spend += balance
            result.served[c].append(queue.pop_head())
    return result


@dataclass
class DropResult:
    expired: dict[TrafficClass, list[Message]]
    soft: dict[TrafficClass, int]
    predictive: dict[TrafficClass, list[Message]]


def serviceability(bucket: TokenBucket | None, pool: KeyPool, cost: int) -> int:
    """One-step serviceability indicator: a token exists and either pool
    could fund one service."""
    token_ok = bucket is None or bucket.level >= 1.0
    keys_ok = pool.regular >= cost or pool.r_emg >= cost
    return 1 if (token_ok and keys_ok) else 0


def age_and_drop(slot: int, queues: dict[TrafficClass, ClassQueue], pool: KeyPool,
                 buckets: dict[TrafficClass, TokenBucket] | None,
                 k_eff: dict[TrafficClass, int], deg: DegradationState | None,
                 specs: dict[TrafficClass, ClassSpec], window_slots: int,
                 soft_drop: bool, predictive_drop: bool) -> DropResult:
    """End-of-slot TTL aging plus the active-drop heuristics.

    (a) Passive timeout: messages whose last service opportunity has passed
        (slot - arrival >= tau at slot end) are removed and counted expired.
    (b) Soft drop: under deep shortage (K regular <= h_drop), Mkt/Log queue
        residents beyond the class cap are dropped, newest first.
    (c) Predictive drop: per non-critical class, packets that cannot be
        reached before expiry at one optimistic service per slot (remaining
        TTL <= queue position) beyond the window serviceability estimate
        Phi*H are dropped, closest-to-expiry first.
    """
    expired: dict[TrafficClass, list[Message]] = {}
    soft: dict[TrafficClass, int] = {c: 0 for c in CLASS_ORDER}
    predictive: dict[TrafficClass, list[Message]] = {c: [] for c in CLASS_ORDER}

    for c in CLASS_ORDER:
        expired[c] = queues[c].expire_older_than(slot, specs[c].tau)

    if soft_drop and deg is not None and pool.regular <= deg.h_drop:
        for c in (TrafficClass.MKT, TrafficClass.LOG):
            q_max = specs[c].q_max
            if q_max is None:
                continue
            queue = queues[c]
            while len(queue) > q_max:
                queue.items.pop()
                soft[c] += 1

    if predictive_drop:
        for c in NONCRITICAL_CLASSES:
            queue = queues[c]
            if not queue.items:
                continue
            tau = specs[c].tau
            bucket = buckets[c] if buckets is not None else None
            capacity = serviceability(bucket, pool, k_eff[c]) * window_slots
            doomed: list[tuple[int, int]] = []  # (remaining, position)
            for pos, msg in enumerate(queue.items, start=1):
                remaining = tau - (slot - msg[1])
                if remaining <= pos:
                    doomed.append((remaining, pos))
            excess = len(doomed) - capacity
            if excess <= 0:
                continue
            doomed.sort()
            drop_positions = {pos for _, pos in doomed[:excess]}
            kept: list[Message] = []
            for pos, msg in enumerate(queue.items, start=1):
                if pos in drop_positions:
                    predictive[c].append(msg)
                else:
                    kept.append(msg)
            queue.items.clear()
            queue.items.extend(kept)

    return DropResult(expired=expired, soft=soft, predictive=predictive)


def check_windowed_sufficiency(ledger, start: int, window_slots: int,
                               specs: dict[TrafficClass, ClassSpec]) -> tuple[bool, int, int]:
    """Windowed zero-timeout sufficiency check for critical classes.

    Compares critical emergency key demand within [start, start+H-1] against
    the reserve at window start plus in-window production and regular
    remainder. A post-hoc diagnostic over a completed ledger slice; the
    window must lie fully inside the recorded horizon.
    """
    if window_slots < 1:
        raise ConfigError("window length must be >= 1")
    end = start + window_slots
    if start < 0 or end > ledger.n_slots:
        raise ConfigError("window extends outside the recorded ledger")
    k_crit = 0
    for c in CRITICAL_CLASSES:
        cost_otp = specs[c].k_otp  # critical classes never degrade
        a_emg = ledger.a_emg[c]
        k_crit += cost_otp * sum(a_emg[start:end])
    r_crit = ledger.r_start[start]
    for u in range(start, end):
        r_crit += ledger.g[u] + max(0, ledger.k_start[u] - ledger.r_start[u])
    return k_crit <= r_crit, k_crit, r_crit
