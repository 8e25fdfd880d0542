"""Command-line interface: thresholds, sweeps, cluster inspection, verification.

Exit codes: 0 success, 1 usage error, 2 no threshold found, 3 bad cluster
name or file, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import cluster as clusters
from . import model, replica, solver
from .duality import (
    NonPositiveDual,
    dual_edge_factor_single,
    dual_edge_factor_twolayer,
    pure_self_dual_point,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_THRESHOLD = 2
EXIT_BAD_CLUSTER = 3
EXIT_VERIFY_FAILED = 4

CSV_HEADER = ("channel", "cluster", "q", "p_c", "residual", "method", "reference_p_c0")

# Published threshold columns on the q grid (0, 0.1, 0.2, 0.3, 0.4, 0.45),
# used as verification targets, with the per-cluster agreement tolerance.
# The one-unit and star columns are hard targets; the B/D/E geometries are
# calibrated refinements checked only while their registry status is verified.
REFERENCE_COLUMNS = {
    ("uncorrelated", "single"): (0.11003, 0.09240, 0.07245, 0.04984, 0.02462, 0.01155),
    ("uncorrelated", "A"): (0.10928, 0.09196, 0.07235, 0.05004, 0.02492, 0.01174),
    ("uncorrelated", "B"): (0.10918, 0.09189, 0.07233, 0.05009, 0.02500, 0.01179),
    ("depolarizing", "C"): (0.18929, 0.16025, 0.12690, 0.08844, 0.04454, 0.02121),
    ("depolarizing", "D"): (0.18886, 0.15985, 0.12656, 0.08819, 0.04440, 0.02114),
    ("depolarizing", "E"): (0.18852, 0.15960, 0.12641, 0.08815, 0.04443, 0.02117),
}
COLUMN_TOLERANCE = {"single": 1e-4, "A": 2e-4, "B": 5e-4, "C": 1e-4, "D": 5e-4, "E": 5e-4}


@dataclass(frozen=True)
class OutputRecord:
    channel: str
    cluster: str
    q: float
    p_c: float
    residual: float
    method: str
    reference_p_c0: float | None


def _record(result: solver.ThresholdResult, with_reference: bool) -> OutputRecord:
    ref = solver.reference_p_c0(result.channel, result.q) if with_reference else None
    # failed rows carry their status in the method column
    method = result.method if result.ok else result.status
    return OutputRecord(
        result.channel, result.cluster, result.q, result.p_c, result.residual, method, ref
    )


def render_table(records: list[OutputRecord]) -> str:
    """Aligned text table; p_c shown to 5 decimals, rounded half to even."""
    rows = [list(CSV_HEADER)]
    for r in records:
        rows.append(
            [
                r.channel,
                r.cluster,
                f"{r.q:g}",
                f"{r.p_c:.5f}",
                f"{r.residual:.3e}",
                r.method,
                "" if r.reference_p_c0 is None else f"{r.reference_p_c0:.5f}",
            ]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(CSV_HEADER))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines)


def render_csv(records: list[OutputRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(
            [
                r.channel,
                r.cluster,
                repr(r.q),
                repr(r.p_c),
                repr(r.residual),
                r.method,
                "" if r.reference_p_c0 is None else repr(r.reference_p_c0),
            ]
        )
    return buf.getvalue().rstrip("\n")


def render_json(records: list[OutputRecord]) -> str:
    return json.dumps([asdict(r) for r in records], indent=2)


def render_records(records: list[OutputRecord], fmt: str) -> str:
    if fmt == "table":
        return render_table(records)
    if fmt == "csv":
        return render_csv(records)
    return render_json(records)


def resolve_cluster(text: str) -> clusters.ClusterSpec:
    """A registered name, or file:<path> pointing at a cluster description."""
    if text.startswith("file:"):
        return clusters.load_cluster_file(text[len("file:"):])
    return clusters.builtin_cluster(text)


def _solver_kwargs(args) -> dict:
    policy = replica.MONTE_CARLO if args.mc_samples else replica.EXACT
    return {
        "policy": policy,
        "mc_samples": args.mc_samples,
        "seed": args.seed,
    }


def cmd_threshold(args) -> int:
    spec = resolve_cluster(args.cluster)
    try:
        result = solver.solve_threshold(
            args.channel, spec, args.loss, args.tol, **_solver_kwargs(args)
        )
    except solver.NoSignChange:
        result = solver.ThresholdResult(
            args.channel, spec.name, args.loss, 0.0, 0.0, (0.0, 0.0), 0,
            replica.MONTE_CARLO if args.mc_samples else replica.EXACT,
            solver.STATUS_NO_SIGN_CHANGE,
        )
    print(render_records([_record(result, with_reference=False)], args.format))
    return EXIT_OK if result.ok else EXIT_NO_THRESHOLD


def _q_grid(q_from: float, q_to: float, q_step: float) -> list[float]:
    if q_step <= 0.0:
        raise ValueError(f"q-step must be positive, got {q_step}")
    if q_to < q_from:
        raise ValueError("q-to must not be below q-from")
    count = int(math.floor((q_to - q_from) / q_step + 1e-9)) + 1
    return [round(q_from + i * q_step, 10) for i in range(count)]


def cmd_sweep(args) -> int:
    spec = resolve_cluster(args.cluster)
    qs = _q_grid(args.q_from, args.q_to, args.q_step)
    results = solver.sweep(args.channel, spec, qs, args.tol, **_solver_kwargs(args))
    records = [_record(r, with_reference=args.with_reference) for r in results]
    print(render_records(records, args.format))
    return EXIT_OK if all(r.ok for r in results) else EXIT_NO_THRESHOLD


def cmd_clusters(args) -> int:
    if args.action == "list":
        rows = [("name", "layers", "slots", "internal", "status")]
        for name in clusters.builtin_names():
            spec = clusters.builtin_cluster(name)
            rows.append(
                (
                    name,
                    str(spec.layers),
                    str(spec.slot_count),
                    str(len(spec.internal_ids)),
                    clusters.calibration_status(name),
                )
            )
        widths = [max(len(row[i]) for row in rows) for i in range(5)]
        for row in rows:
            print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        return EXIT_OK
    spec = clusters.builtin_cluster(args.name)
    print(json.dumps(clusters.cluster_to_dict(spec), indent=2))
    return EXIT_OK


def _binary_entropy_root(q: float) -> float:
    """Independent oracle: solve H2(p) = 1 - 1/(2(1-q)) by bisection.

    H2 is the binary entropy in bits, increasing on (0, 1/2], so the root is
    unique. Deliberately avoids every package code path.
    """
    target = 1.0 - 1.0 / (2.0 * (1.0 - q))

    def f(p: float) -> float:
        return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p)) - target

    lo, hi = 1e-15, 0.5
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_involution(transform, size: int) -> tuple[bool, str]:
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(50):
        x = tuple(rng.uniform(0.1, 10.0, size=size))
        y = transform(transform(x))
        worst = max(worst, max(abs(a - b) / abs(a) for a, b in zip(x, y)))
    return worst <= 1e-14, f"max relative deviation {worst:.2e} over 50 random factors"


def _check_self_dual() -> tuple[bool, str]:
    kc = pure_self_dual_point()
    eq = abs(math.exp(-2.0 * kc) - math.tanh(kc))
    ok = abs(kc - 0.440687) <= 1e-6 and eq <= 1e-10
    return ok, f"K_c = {kc:.9f}, defining equation residual {eq:.2e}"


def _check_single_oracle() -> tuple[bool, str]:
    worst = 0.0
    for i in range(10):
        q = 0.05 * i
        got = solver.solve_threshold("uncorrelated", "single", q, 1e-10).p_c
        worst = max(worst, abs(got - _binary_entropy_root(q)))
    return worst <= 1e-9, f"max |p_c - entropy-condition root| = {worst:.2e}"


def _check_column(kind: str, name: str) -> tuple[bool, str]:
    targets = REFERENCE_COLUMNS[(kind, name)]
    tol = COLUMN_TOLERANCE[name]
    results = solver.sweep(kind, name, solver.REFERENCE_Q)
    if not all(r.ok for r in results):
        return False, "sweep failed to find a threshold"
    worst = max(abs(r.p_c - t) for r, t in zip(results, targets))
    return worst <= tol, f"max |p_c - reference| = {worst:.2e} (allowed {tol:.0e})"


def _check_parallel_determinism() -> tuple[bool, str]:
    qs = (0.0, 0.2, 0.4)
    outputs = []
    values = []
    for w in (1, 2, replica.worker_count(None)):
        results = solver.sweep("uncorrelated", "A", qs, workers=w)
        values.append([(r.p_c, r.residual) for r in results])
        outputs.append(render_csv([_record(r, True) for r in results]))
    spread = max(
        abs(a - b)
        for run in values[1:]
        for (a, _), (b, _) in zip(run, values[0])
    )
    channel = model.ChannelSpec("uncorrelated", 0.09, 0.1)
    star = clusters.builtin_cluster("A")
    mc = [
        replica.gap_monte_carlo(channel, star, 100_000, seed=7, workers=w).delta
        for w in (1, 2)
    ]
    ok = (
        spread <= 1e-12
        and len(set(outputs)) == 1
        and mc[0] == mc[1]
    )
    return ok, f"sweep spread {spread:.1e}, formatted outputs identical: {len(set(outputs)) == 1}"


def cmd_verify(args) -> int:
    checks: list[tuple[str, object]] = [
        ("hadamard-involution-single", lambda: _check_involution(dual_edge_factor_single, 2)),
        ("hadamard-involution-twolayer", lambda: _check_involution(dual_edge_factor_twolayer, 4)),
        ("pure-self-dual-point", _check_self_dual),
        ("single-edge-oracle", _check_single_oracle),
        ("column-uncorrelated-single", lambda: _check_column("uncorrelated", "single")),
        ("column-depolarizing-C", lambda: _check_column("depolarizing", "C")),
    ]
    if args.suite == "full":
        checks.append(("column-uncorrelated-A", lambda: _check_column("uncorrelated", "A")))
        for kind, name in (("uncorrelated", "B"), ("depolarizing", "D"), ("depolarizing", "E")):
            if clusters.calibration_status(name) == "verified":
                checks.append(
                    (f"column-{kind}-{name}", lambda k=kind, n=name: _check_column(k, n))
                )
            else:
                checks.append((f"column-{kind}-{name}", None))
        checks.append(("parallel-determinism", _check_parallel_determinism))

    failed = 0
    for name, fn in checks:
        if fn is None:
            print(f"SKIP {name}: geometry is unverified, no calibration to check")
            continue
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} check(s) failed")
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lossthreshold",
        description="Optimal error thresholds of surface codes with qubit loss.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--channel", required=True, choices=list(model.CHANNEL_KINDS))
        p.add_argument("--cluster", required=True, help="registered name or file:<path>")
        p.add_argument("--tol", type=float, default=1e-7, help="bracket width tolerance")
        p.add_argument("--mc-samples", type=int, default=None,
                       help="sample the gap instead of exact enumeration")
        p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
        p.add_argument("--format", choices=["table", "csv", "json"], default="table")

    p_thr = sub.add_parser("threshold", help="threshold for one loss rate")
    common(p_thr)
    p_thr.add_argument("--loss", type=float, required=True, help="qubit loss rate q")
    p_thr.set_defaults(func=cmd_threshold)

    p_sweep = sub.add_parser("sweep", help="thresholds over a grid of loss rates")
    common(p_sweep)
    p_sweep.add_argument("--q-from", type=float, default=0.0)
    p_sweep.add_argument("--q-to", type=float, default=0.45)
    p_sweep.add_argument("--q-step", type=float, default=0.05)
    p_sweep.add_argument("--with-reference", action="store_true",
                         help="attach the published comparison threshold column")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ver = sub.add_parser("verify", help="run the self-verification suite")
    p_ver.add_argument("--suite", choices=["basic", "full"], default="basic")
    p_ver.set_defaults(func=cmd_verify)

    p_cl = sub.add_parser("clusters", help="inspect registered cluster geometries")
    cl_sub = p_cl.add_subparsers(dest="action", required=True)
    cl_list = cl_sub.add_parser("list", help="names, sizes and calibration status")
    cl_list.set_defaults(func=cmd_clusters)
    cl_show = cl_sub.add_parser("show", help="full geometry in the cluster file schema")
    cl_show.add_argument("name")
    cl_show.set_defaults(func=cmd_clusters)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (clusters.UnknownCluster, clusters.ClusterFileError, NonPositiveDual) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CLUSTER
    except (model.DomainError, replica.TooManyTerms, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
