"""Smoke test for the ymlab_py extension.

Uses an installed ``ymlab_py`` if there is one, otherwise loads the shared
library built by ``cargo build -p ymlab-py --features extension-module``
(override the path with YMLAB_PY_LIB). Exits 0 with a note when neither is
available.
"""

import importlib.machinery
import importlib.util
import json
import math
import os
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import ymlab_py

        return ymlab_py
    except ImportError:
        pass
    candidates = []
    if os.environ.get("YMLAB_PY_LIB"):
        candidates.append(pathlib.Path(os.environ["YMLAB_PY_LIB"]))
    for profile in ("release", "debug"):
        candidates.append(ROOT / "target" / profile / "libymlab_py.so")
    for path in candidates:
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("ymlab_py", str(path))
            spec = importlib.util.spec_from_file_location("ymlab_py", path, loader=loader)
            mod = importlib.util.module_from_spec(spec)
            loader.exec_module(mod)
            return mod
    return None


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    ym = load()
    if ym is None:
        print("ymlab_py not built; skipping")
        return 0

    su2 = ym.LieBasis(2)
    assert su2.dim_g == 3 and su2.f(0, 1, 2) == 1.0
    assert su2.d_g() == 2
    assert ym.LieBasis(3).d_g() == 4
    eig, eta = su2.mass_spectrum()
    assert len(eig) == 9 and eta > 0

    lat = ym.ModeLattice([math.pi, math.pi, 0.6 * math.pi, 0.6 * math.pi], 1.5)
    prop = ym.Propagator(lat, su2, 1.0)
    assert prop.sigma_min > 0 and prop.residual() < 1e-8
    free = ym.Propagator(lat, su2, 1.0, [[0.0] * 3] * 3)
    _, err = free.free_check()
    assert err < 1e-10, err

    corr = ym.correlation(lat, su2, 1.0, [0.5, 1.0], 2, 3)
    assert len(corr["mean"]) == 2 and all(math.isfinite(v) for v in corr["mean"])

    try:
        ym.ModeLattice([math.pi] * 4, 2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("resonant cutoff accepted")

    model = ym.VertexModel.identity(su2, 1, 1.0)
    theta = model.theta(1)
    assert close(theta, model.theta_brute(1), 1e-10)

    moll = ym.Mollifier(math.pi, 256, 4)
    norms = moll.norms()
    assert norms["containment_exact"] and norms["nonnegative"]
    assert close(norms["g_l1_over_eps4"], 1296.0, 1e-12)
    torus = ym.VertexModel.identity(su2, 1, (2 * math.pi) ** 4)
    xi, xi1, _ = moll.xi(torus, 1)
    assert close(xi1, torus.theta(1), 1e-10), (xi1, torus.theta(1))
    diff, ratio = moll.placement_check(torus, 3, 7)
    assert diff < 1e-10 and ratio <= 1.0

    alg = ym.FieldAlgebra(3, 1)
    assert len(alg) == 24
    w = alg.free_weight()
    assert close(w.berezin(), w.berezin_wick(), 1e-12)

    toy = ym.toy_strong(model, 0.5, (0, 0, 0, 1, 1, 0))
    assert toy["lowest_order"] == 0

    rec = json.loads(ym.run_experiment('experiment = "mass-scan"\nsamples = 200\n'))
    assert rec["payload"]["d_g"] == 2
    assert all(a["pass"] for a in rec["assertions"])

    print("ymlab_py smoke test ok: Theta_1 = %s, Xi_1 = %s" % (torus.theta(1), xi))
    return 0


if __name__ == "__main__":
    sys.exit(main())
