"""Mean curvature, the lambda choice and the command line
==========================================================

For the prescribed mean-curvature energy the parameter lambda must be small
enough that a zero-trace bump climbs above Phi(0) before the nonlinearity
takes over.  ``select_lambda`` halves lambda until that holds.  The same run
is then reproduced through the ``nehari-bv`` command with an INI file.
"""

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from nehari_bv import DiscreteDomain, Functional, Power, ProblemSpec, SolverConfig, select_lambda, solve

base = ProblemSpec(Functional.MEAN_CURVATURE, Power(1.5), DiscreteDomain.unit_square(8))
choice = select_lambda(base, lam0=64.0)
print(f"accepted lambda {choice.lam} after {choice.halvings} halvings")

res = solve(base.with_lambda(choice.lam), SolverConfig(restarts=3, seed=2))
print(f"energy {res.energy:.6f}   curvature residual {res.certificate.mc_el_residual:.1e}")

# %% The command-line route writes a manifest with content hashes.
config = """
[problem]
functional = mean_curvature
nonlinearity = power
p = 1.5
lambda = auto

[grid]
nx = 8
ny = 8

[solver]
restarts = 3

[run]
commands = audit, solve, certify
"""
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp, "mc.ini")
    path.write_text(config)
    out = Path(tmp, "out")
    code = subprocess.call([sys.executable, "-m", "nehari_bv.cli", "run", str(path),
                            "--out", str(out), "--seed", "2"])
    manifest = json.loads((out / "manifest.json").read_text())
    print("exit code", code, "status", manifest["status"])
    for name, digest in manifest["files"].items():
        print(f"  {name:18s} {digest['sha256'][:16]}")
