"""Smoke test for the dpw_py extension.

Build first:
    cargo build --release -p dpw-python --features extension-module
then run `python3 python/smoke_test.py` from the repository root. Set DPW_PY_LIB
to point at a different build of libdpw_py.so.
"""

import cmath
import json
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LIB = os.environ.get("DPW_PY_LIB", os.path.join(ROOT, "target", "release", "libdpw_py.so"))


def load():
    if not os.path.exists(LIB):
        sys.exit(f"missing {LIB}; build with: cargo build --release -p dpw-python --features extension-module")
    d = tempfile.mkdtemp()
    shutil.copy(LIB, os.path.join(d, "dpw_py.so"))
    sys.path.insert(0, d)
    import dpw_py

    return dpw_py


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    dpw = load()
    checks = []

    def check(name, ok, detail=""):
        checks.append(ok)
        print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")

    # Loops and splittings.
    g = dpw.Loop.exp_axis([(-1, 0.4 + 0.1j), (1, -0.2 + 0.3j)])
    val = g.eval(0.7)
    s = (0.4 + 0.1j) * cmath.exp(-0.7j) + (-0.2 + 0.3j) * cmath.exp(0.7j)
    check("exp_axis value", close(val[0][0], cmath.cosh(s), 1e-12) and close(val[0][1], cmath.sinh(s), 1e-12))
    check("inverse", (g * g.inverse()).max_abs_diff(dpw.Loop.identity()) < 1e-10)
    f, h = dpw.iwasawa(g)
    check("iwasawa round trip", (f * h).max_abs_diff(g) < 1e-10)
    fv = f.eval(1.1)
    unit = [[sum(fv[k][i].conjugate() * fv[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
    check("iwasawa unitary", all(close(unit[i][j], 1.0 if i == j else 0.0, 1e-10) for i in range(2) for j in range(2)))
    gm, gp = dpw.birkhoff(g)
    check("birkhoff round trip", (gm * gp).max_abs_diff(g) < 1e-9)
    try:
        dpw.Loop([(1, [[1, 0], [0, 1]])])
        check("twist violation rejected", False)
    except ValueError:
        check("twist violation rejected", True)

    # Surfaces.
    cyl = dpw.Surface(dpw.Potential.cylinder(), "n=9,R=0.5")
    pts = [p for p in cyl.points(0.0) if p is not None]
    check("cylinder base point", close(cyl.points(0.0)[40][2], -1.0, 1e-12), f"{cyl.points(0.0)[40]}")
    geo = cyl.geometry(0.0)
    check("cylinder H", geo["summary"]["max_abs_h_error"] < 1e-9, f"{geo['summary']['max_abs_h_error']:.2e}")
    check("cylinder nodes", len(pts) == 81)

    smyth = dpw.Surface(dpw.Potential.smyth(2), "n=17,R=0.6")
    yes = smyth.check_symmetry("rot:4")
    no = smyth.check_symmetry("rot:3")
    check("smyth rot:4 symmetric", yes["verdict"] == "symmetric")
    check("smyth rot:3 not symmetric", no["verdict"] != "symmetric", no["verdict"])

    dressed = cyl.dress("omega:1")
    check("dressed translation", dressed.check_symmetry("trans:1,0")["verdict"] == "symmetric")

    rep, objs = dpw.generate(json.dumps({"potential": {"type": "cylinder"}, "grid": {"kind": "plane", "n": 9, "R": 0.5}, "lambdas": [0.0, 1.0]}))
    check("generate", len(objs) == 2 and len(rep["members"]) == 2 and objs[0].startswith("#"))

    p = dpw.Potential.from_json('{"type":"branched","z0":[0.5,0]}')
    check("branched warning", len(p.warnings()) == 1 and close(p.f(0.5), 0.0, 1e-15))

    print(f"{sum(checks)}/{len(checks)} checks passed")
    sys.exit(0 if all(checks) else 1)


if __name__ == "__main__":
    main()
