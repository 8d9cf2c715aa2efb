"""Smoke test for the multidescent_py extension module.

Build it with
    cargo build --release -p multidescent-python --features extension-module
then run this script with the directory holding the module on PYTHONPATH, or
with MULTIDESCENT_PY_LIB pointing at the built shared library.
"""

import importlib.machinery
import importlib.util
import os
import random
import sys


def load():
    path = os.environ.get("MULTIDESCENT_PY_LIB")
    if not path:
        import multidescent_py

        return multidescent_py
    loader = importlib.machinery.ExtensionFileLoader("multidescent_py", path)
    spec = importlib.util.spec_from_file_location("multidescent_py", path, loader=loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def matmul(a, b):
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


def max_abs_diff(a, b):
    return max(abs(x - y) for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def main():
    md = load()
    rng = random.Random(3)

    law = md.Law("std*14,gauss:1,mix:0.5:4")
    assert law.dim == 16
    assert law.coordinates()[-1] == ("trimodal", 0.5, 4.0)

    # Pseudoinverse: append agrees with the direct route and A A+ A = A.
    rows = [[rng.gauss(0, 1) for _ in range(3)] for _ in range(6)]
    col = [rng.gauss(0, 1) for _ in range(6)]
    state = md.Pinv(rows)
    assert state.regime == "under"
    appended = state.append(col)
    direct = md.Pinv([r + [c] for r, c in zip(rows, col)])
    assert max_abs_diff(appended.pinv(), direct.pinv()) < 1e-10
    a = appended.matrix()
    assert max_abs_diff(matmul(matmul(a, appended.pinv()), a), a) < 1e-10

    # With d < n, zero coefficients and unit noise the excess loss is d/(n - d - 1).
    est = md.estimate_loss(md.Law("std*20"), d=3, n=12, trials=20000, seed=5)
    exact = 3 / (12 - 3 - 1)
    assert abs(est["mean"] - exact) < 4 * est["stderr"] + 1e-3, (est, exact)

    step = md.estimate_step(law, 14, 6, md.Law("gauss:1"), trials=20000, seed=5)
    assert step["delta_mean"] < 0

    curve = md.estimate_losses(law, 6, 4, 10, trials=4000, seed=1)
    assert [e["d"] for e in curve] == [4, 5, 7, 8, 9, 10]

    plan = md.design(6, "du", trials=20000, seed=11)
    assert plan.arrows == "du" and plan.all_certified()
    again = md.Plan.from_toml(plan.to_toml())
    assert again.certificates() == plan.certificates()
    passed, steps = again.verify(seed=12)
    assert passed, steps

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
