"""Single-server queue analytics and a discrete-event cross-check.

For a stable M/M/1 queue (Poisson arrivals at rate lambda, exponential
service at rate mu, lambda < mu) the steady-state quantities are

    rho = lambda / mu              busy fraction, idle = 1 - rho
    L   = rho / (1 - rho)          mean number in system
    Lq  = rho**2 / (1 - rho)       mean number waiting
    Ls  = rho                      mean number in service
    W   = L / lambda               mean time in system (Little's law)
    Wq  = Lq / lambda
    Ws  = Ls / lambda
    pi_j = rho**j * (1 - rho)      probability of j packets in system

``simulate_mm1`` is an independent event-driven simulator of the same
queue, used to validate the closed forms empirically.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path


class UnstableQueue(ValueError):
    """Arrival rate at or above service rate: no steady state exists."""


class NonPositiveServiceRate(ValueError):
    pass


@dataclass(frozen=True)
class QueueStats:
    arrival_rate: float
    service_rate: float
    rho: float
    L: float
    Lq: float
    Ls: float
    W: float
    Wq: float
    Ws: float
    idle: float


def mm1_stats(arrival_rate: float, service_rate: float) -> QueueStats:
    """Closed-form steady-state quantities of the M/M/1 queue.

    Waiting times are defined as 0 when the arrival rate is 0, which
    keeps L = lambda * W valid in the empty-system limit.
    """
    if service_rate <= 0:
        raise NonPositiveServiceRate(f"service rate must be positive, got {service_rate}")
    if arrival_rate < 0:
        raise ValueError(f"arrival rate must be nonnegative, got {arrival_rate}")
    if arrival_rate >= service_rate:
        raise UnstableQueue(
            f"arrival rate {arrival_rate} >= service rate {service_rate}"
        )
    rho = arrival_rate / service_rate
    L = rho / (1.0 - rho)
    Lq = rho * rho / (1.0 - rho)
    Ls = rho
    if arrival_rate > 0:
        W, Wq, Ws = L / arrival_rate, Lq / arrival_rate, Ls / arrival_rate
    else:
        W = Wq = Ws = 0.0
    return QueueStats(
        arrival_rate=arrival_rate,
        service_rate=service_rate,
        rho=rho,
        L=L,
        Lq=Lq,
        Ls=Ls,
        W=W,
        Wq=Wq,
        Ws=Ws,
        idle=1.0 - rho,
    )


@dataclass(frozen=True)
class SteadyStateRow:
    """Probability of j packets in the system; j - 1 of them queue."""

    j: int
    probability: float
    in_queue: int


def steady_state_table(
    arrival_rate: float,
    service_rate: float,
    epsilon: float = 1e-6,
    j_max: int = 1000,
) -> list[SteadyStateRow]:
    """Rows j = 0, 1, ... of pi_j = rho**j * (1 - rho).

    Emission stops before the first row whose probability falls below
    ``epsilon``, or after row ``j_max``, whichever comes first.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if j_max < 0:
        raise ValueError(f"j_max must be >= 0, got {j_max}")
    stats = mm1_stats(arrival_rate, service_rate)
    rho, pi0 = stats.rho, stats.idle
    rows = []
    for j in range(j_max + 1):
        pi_j = rho**j * pi0
        if pi_j < epsilon:
            break
        rows.append(SteadyStateRow(j=j, probability=pi_j, in_queue=max(j - 1, 0)))
    return rows


@dataclass(frozen=True)
class SimulationResult:
    """Empirical estimates from one seeded simulation run."""

    n_in_system: float      # time-averaged number in system
    sojourn_s: float        # mean time in system of departed packets
    utilization: float      # busy fraction of the horizon
    arrivals: int
    departures: int
    arrival_rate: float     # observed arrivals / horizon


def simulate_mm1(
    arrival_rate: float,
    service_rate: float,
    horizon_s: float,
    seed: int,
) -> SimulationResult:
    """Event-driven single-FIFO-server simulation over a fixed horizon.

    Exponential interarrival and service draws come from one seeded
    generator, so results are deterministic per seed.  The sojourn mean
    covers packets that departed within the horizon.
    """
    if service_rate <= 0:
        raise NonPositiveServiceRate(f"service rate must be positive, got {service_rate}")
    if arrival_rate < 0:
        raise ValueError(f"arrival rate must be nonnegative, got {arrival_rate}")
    if horizon_s <= 0:
        raise ValueError(f"horizon must be positive, got {horizon_s}")

    rng = random.Random(seed)
    inf = float("inf")
    now = 0.0
    next_arrival = rng.expovariate(arrival_rate) if arrival_rate > 0 else inf
    next_departure = inf
    waiting: list[float] = []  # arrival stamps, FIFO
    n = 0
    area = 0.0
    busy = 0.0
    arrivals = departures = 0
    sojourn_total = 0.0

    while True:
        t_next = min(next_arrival, next_departure)
        if t_next > horizon_s:
            area += n * (horizon_s - now)
            if n > 0:
                busy += horizon_s - now
            break
        area += n * (t_next - now)
        if n > 0:
            busy += t_next - now
        now = t_next
        if next_arrival <= next_departure:
            arrivals += 1
            waiting.append(now)
            n += 1
            if n == 1:
                next_departure = now + rng.expovariate(service_rate)
            next_arrival = now + rng.expovariate(arrival_rate)
        else:
            departures += 1
            sojourn_total += now - waiting.pop(0)
            n -= 1
            next_departure = (
                now + rng.expovariate(service_rate) if n > 0 else inf
            )

    return SimulationResult(
        n_in_system=area / horizon_s,
        sojourn_s=sojourn_total / departures if departures else 0.0,
        utilization=busy / horizon_s,
        arrivals=arrivals,
        departures=departures,
        arrival_rate=arrivals / horizon_s,
    )


def write_steady_csv(path, rows: list[SteadyStateRow], idle: float) -> Path:
    """Steady-state table with the idle column repeated on every row."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Messages", "Steady-State Probability", "Expected Idle Time"])
        for row in rows:
            writer.writerow([row.j, repr(row.probability), repr(idle)])
    return path
