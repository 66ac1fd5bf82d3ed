#!/usr/bin/env python3
"""Smoke test for the multishock_py extension module.

Builds nothing itself: compile the extension first with

    cargo build -p multishock-py --release

then run

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "libmultishock_py.so",
        REPO / "target" / "debug" / "libmultishock_py.so",
        REPO / "target" / "release" / "libmultishock_py.dylib",
        REPO / "target" / "debug" / "libmultishock_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run `cargo build -p multishock-py --release` first")
    stage = Path(tempfile.mkdtemp(prefix="multishock-py-"))
    shutil.copy(built, stage / "multishock_py.so")
    sys.path.insert(0, str(stage))
    import multishock_py

    return multishock_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    ms = import_module()
    print(f"multishock_py {ms.__version__} loaded")

    # Scenario validation: two symmetric shocks meet at the origin at t* = 2.
    scenario = ms.Scenario([-1.0, 1.0], [0.0, 0.5, 1.0])
    approx(scenario.t_star, 2.0)
    approx(scenario.r_star, 0.0)
    assert scenario.shock_count == 2
    approx(scenario.limit_variances()[0], 1.0)
    approx(scenario.limit_variances()[1], 1.0)

    # A single shock needs an explicit meeting time.
    try:
        ms.Scenario([0.0], [0.2, 0.8])
    except ValueError:
        pass
    else:
        raise AssertionError("missing hint must raise")

    # The coalescence map: identity on ordered inputs, convex combination on
    # crossed ones.
    approx_list = lambda xs, ys: [approx(a, b, 1e-12) for a, b in zip(xs, ys)]
    approx_list(ms.psi([-1.0, 1.0], [0.0, 0.5, 1.0]), [-1.0, 1.0])
    approx_list(ms.psi([1.0, -1.0], [0.0, 0.5, 1.0]), [0.0, 0.0])
    approx_list(ms.psi_s([-1.0, 1.0], -4.0, [0.0, 0.5, 1.0]), [-3.0, 3.0])

    # Front tracking: collision at t=2 at the origin, stationary afterwards.
    positions, events = ms.solve_fronts([-1.0, 1.0], [0.0, 0.5, 1.0], 3.0)
    approx_list(positions, [0.0, 0.0])
    assert len(events) == 1
    time, low, high, position = events[0]
    approx(time, 2.0)
    assert (low, high) == (1, 2)
    approx(position, 0.0)
    approx(ms.front_density([-1.0, 1.0], [0.0, 0.5, 1.0], 1.0, 0.0), 0.5)

    # Exact two-site relaxation: P(moved by ln 2) = 1/2.
    p = ms.exact_distribution(2, 0b01, math.log(2.0))
    approx(p[0b10], 0.5, 1e-12)

    # Segment runs are deterministic in the seed.
    a = ms.simulate_segment(5, 0b00101, 1.0, 7)
    b = ms.simulate_segment(5, 0b00101, 1.0, 7)
    assert a == b

    # Pushforward oracle and mixture weights: symmetric two-shock scenario
    # puts weight (3/8, 1/4, 3/8) at the meeting point.
    samples = ms.pushforward_oracle(scenario, 20000, 1)
    weights = ms.mixture_weights(samples, 0.0)
    assert sum(weights) == 1.0
    assert abs(weights[0] - 0.375) < 0.02
    assert abs(weights[1] - 0.25) < 0.02

    # Cylinder expectations.
    occ = ms.Cylinder.occupancy()
    approx(occ.nu_expectation(0.3), 0.3, 1e-12)
    pattern = ms.Cylinder.indicator([1, 0, 0])
    approx(pattern.nu_expectation(0.25), 0.25 * 0.75 * 0.75, 1e-12)

    # Gaussian diagnostics on oracle marginals of a single shock: the
    # pushforward is exactly Gaussian there.
    one = ms.Scenario([0.0], [0.2, 0.8], 1.0)
    ys = [row[0] for row in ms.pushforward_oracle(one, 5000, 3)]
    check = json.loads(ms.gaussian_check(ys, one.limit_variances()[0]))
    assert check["pass"], check

    # A small ensemble: deterministic, ordered shock positions, summary JSON.
    ens = ms.run_ensemble(scenario, 0.1, 40, 5, capture_radius=16)
    ens2 = ms.run_ensemble(scenario, 0.1, 40, 5, capture_radius=16)
    assert ens.records_csv() == ens2.records_csv()
    assert ens.replicas == 40
    assert ens.invalid_count == 0
    for row in ens.y_joint():
        assert row[0] <= row[1]
    summary = json.loads(ens.summary_json())
    assert summary["replicas"] == 40
    report = json.loads(ens.local_measure(0.0, occ, oracle_samples=5000))
    assert 0.0 <= report["estimate"] <= 1.0

    print("smoke test passed")


if __name__ == "__main__":
    main()
