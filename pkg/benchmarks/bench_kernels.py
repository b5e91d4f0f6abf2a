"""Compiled vs pure-Python dynamics kernels on the bundled planar biped.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row times one call and checks that both backends agree on the result.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from locogym.dynamics import (
    ActuatorConfig,
    ContactParams,
    PhysicsState,
    available_backends,
    bias_forces,
    forward_dynamics,
    load_backend,
    mass_matrix,
    pack_model,
    planar_biped,
    standing_height,
    step,
)


def cases(model, arrays, kernels):
    q = np.concatenate([[0.0, standing_height(model), 0.05], model.q0 + 0.1])
    v = np.linspace(-0.5, 0.5, model.ndof)
    state = PhysicsState(q=q, v=v)
    contact = ContactParams()
    act = ActuatorConfig.from_model(model)
    tau = np.zeros(model.num_joints)
    return {
        "mass_matrix": lambda: mass_matrix(model, q, kernels=kernels),
        "bias_forces": lambda: bias_forces(model, q, v, kernels=kernels),
        "forward_dynamics": lambda: forward_dynamics(model, state, tau, contact, kernels=kernels),
        "control_step_20_ticks": lambda: step(model, state, model.q0, act, contact, 20, 0.001, arrays=arrays,
                                              kernels=kernels).state.q,
    }


def best_time(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace` first", file=sys.stderr)
    model = planar_biped()
    arrays = pack_model(model)
    per_backend = {name: cases(model, arrays, load_backend(name)) for name in backends}
    names = list(per_backend[backends[0]])

    rows = []
    for name in names:
        outputs = {b: np.asarray(per_backend[b][name]()) for b in backends}
        ref = outputs[backends[-1]]
        diff = max(float(np.max(np.abs(o - ref))) for o in outputs.values())
        times = {b: best_time(per_backend[b][name], args.repeat) for b in backends}
        rows.append({"case": name, "max_abs_diff": diff, **{f"{b}_us": 1e6 * t for b, t in times.items()}})

    header = f"{'case':<24}" + "".join(f"{b + ' us':>14}" for b in backends) + f"{'speedup':>10}{'max diff':>12}"
    print(header)
    for r in rows:
        line = f"{r['case']:<24}" + "".join(f"{r[b + '_us']:>14.2f}" for b in backends)
        speed = r["python_us"] / r["cython_us"] if "cython" in backends else 1.0
        print(line + f"{speed:>9.1f}x{r['max_abs_diff']:>12.1e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
