"""Replay a recorded reference workload through the analytics chain.

Three runs of a two-client messenger workload (chat only, transfers
only, and both) were captured once on real hardware; their received-side
counters are hard-coded below.  This script feeds those counters through
the derivation chain and prints every figure the chain produces: per-run
rates, cross-run averages, the aggregate-response utilization, the
matching M/M/1 quantities, and the difference percentages between the
two models.
"""

from biokm.queueing import mm1_stats, steady_state_table
from biokm.report import Mode, averaged_rates, compare, table_rates
from biokm.telemetry import RunMetrics, aggregate_response

COUNTERS = {
    "ircd": dict(packets=6452, payload_bytes=5868, elapsed_ms=111687, service_ms=73328),
    "ftp": dict(packets=4067, payload_bytes=3653, elapsed_ms=152297, service_ms=111922),
    "mixed": dict(packets=6832, payload_bytes=6214, elapsed_ms=155672, service_ms=113625),
}

# --- per-run rates -----------------------------------------------------------

runs = [RunMetrics.from_counters(label, **c) for label, c in COUNTERS.items()]

print("per-run derived rates (exact, with one-decimal table cells):")
for run in runs:
    cells = table_rates(run)
    print(
        f"  {run.label:>5s}: arrival {run.arrival_rate:8.3f}/s (cell {cells.arrival_rate}), "
        f"service {run.service_rate:8.3f}/s (cell {cells.service_rate}), "
        f"throughput {run.throughput:8.3f} bit/s (cell {cells.throughput}), "
        f"capacity {run.capacity:8.3f} bit/s (cell {cells.capacity})"
    )

# --- averages and the two utilization models ---------------------------------

mean = averaged_rates(runs, Mode.TABLE_PRECISION)
print("\naveraged one-decimal rates:")
print(f"  arrival {mean.arrival_rate}/s  service {mean.service_rate}/s")
print(f"  throughput {mean.throughput} bit/s  capacity {mean.capacity} bit/s")

bio = aggregate_response(mean.throughput, mean.capacity)
little = mm1_stats(mean.arrival_rate, mean.service_rate)
print(f"\naggregate response     Q   = {bio.utilization:.9f}  idle = {bio.idle:.9f}")
print(f"little's law           rho = {little.rho:.9f}  idle = {little.idle:.9f}")
print(f"  L  = {little.L:.9f}   Lq = {little.Lq:.9f}   Ls = {little.Ls:.9f}")
print(f"  W  = {little.W:.9f}   Wq = {little.Wq:.9f}   Ws = {little.Ws:.9f}")

report = compare(bio, little, Mode.TABLE_PRECISION)
print("\ndifference percentages (max-denominator convention):")
print(f"  utilization: {report.util_diff_pct:.9f}%")
print(f"  idle:        {report.idle_diff_pct:.9f}%")

# --- steady-state probabilities ----------------------------------------------

print("\nsteady-state probabilities at the averaged rates (j = 0..10):")
for row in steady_state_table(mean.arrival_rate, mean.service_rate, j_max=10):
    print(f"  j={row.j:<2d} pi={row.probability:.9f} in_queue={row.in_queue}")
