"""Build the extension, import it and exercise the main entry points.

Run from anywhere: python3 crates/python/python/smoke_test.py
"""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[3]


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "diffcon-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libdiffcon_py.so"
    dest = pathlib.Path(tempfile.mkdtemp()) / "diffcon_py.so"
    shutil.copy(lib, dest)
    sys.path.insert(0, str(dest.parent))


def main():
    build()
    import diffcon_py as dc

    e = dc.Expr("u0^2*sin(x)")
    assert str(e.diff("x")) and e.free_symbols() == ["u0", "x"]
    v = e.diff("u0").evaluate({"u0": 1.5, "x": 0.3})
    assert abs(v - 3.0 * math.sin(0.3)) < 1e-14, v
    assert abs(dc.evaluate("exp(a)*b", a=0.0, b=2.0) - 2.0) < 1e-15

    fit = dc.fit_b("u2 + 2*u1^2/u0", 2.0, "0.5*u0 + 0.3*u0^(-2)", seed=1)
    assert all(abs(a - b) < 1e-6 for a, b in zip(fit["b"], [4, 4, 1, 1])), fit["b"]
    rep = dc.check_constraint("u2 + 2*u1^2/u0", 2.0, "0.5*u0 + 0.3*u0^(-2)", seed=1)
    assert rep["pass"], rep

    roots = sorted(b3 for b3, _ in dc.solve_b3_relations(2.0))
    assert abs(roots[0] - 1.0) < 1e-12 and abs(roots[1] - 2.0) < 1e-12, roots

    heat = dc.residual_exact("2 + exp(-t)*cos(x)", "u2", t=[0.0, 1.0], x=[-2.0, 2.0])
    assert heat["pass"], heat

    traj = dc.integrate_rk4(["c"], ["-c"], [1.0], 0.0, 1.0, 0.01)
    assert abs(traj["states"][-1][0] - math.exp(-1.0)) < 1e-9

    cat = dc.Catalog()
    assert len(cat) == len(cat.ids()) and "so-2" in cat.ids("constraint")
    assert cat.record("so-2")["id"] == "so-2"
    for command in ("verify-lde", "verify-solution", "reduce", "compat"):
        report = cat.run(command, seed=7)
        failed = [c["id"] for c in report["cases"] if not c["pass"]]
        assert not failed, (command, failed)
        print(f"{command}: {len(report['cases'])} cases ok")
    print("smoke test ok")


if __name__ == "__main__":
    main()
