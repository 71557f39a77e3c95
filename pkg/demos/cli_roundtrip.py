"""Drive the command line end to end: validate, run, rerun, diff.

Writes a small topology and scenario to a temp dir, then shells out the
same way a batch job would. The second run must be byte-identical.
"""

import pathlib
import subprocess
import sys
import tempfile

TOPO = """\
node alice role=end class=first memories=4
node relay1 role=repeater class=first memories=4 eps_op=0.02
node relay2 role=repeater class=first memories=4 eps_op=0.02
node bob role=end class=first memories=4
edge alice relay1 length_km=15 alpha=0 p_src=0.6 rate_hz=1e4
edge relay1 relay2 length_km=15 alpha=0 p_src=0.6 rate_hz=1e4
edge relay2 bob length_km=15 alpha=0 p_src=0.6 rate_hz=1e4
"""

SCENARIO = """\
seed=101
trials=5
duration=0.05
controller=relay1
request id=co1 src=alice dst=bob model=co class=first protocol=sl arrivals=fixed:0,0.01
request id=cl1 src=alice dst=bob model=cl class=first protocol=ol arrivals=poisson:200
"""


def sh(*args):
    proc = subprocess.run([sys.executable, "-m", "qrnet", *args],
                          capture_output=True, text=True)
    print(f"$ qrnet {' '.join(args)}")
    print(proc.stdout, end="")
    if proc.returncode != 0:
        print(proc.stderr, end="")
        sys.exit(proc.returncode)
    return proc


with tempfile.TemporaryDirectory() as tmp:
    root = pathlib.Path(tmp)
    (root / "line.topo").write_text(TOPO)
    (root / "mixed.scen").write_text(SCENARIO)

    sh("validate", "--topology", str(root / "line.topo"))
    print()
    sh("run", "--topology", str(root / "line.topo"),
       "--scenario", str(root / "mixed.scen"),
       "--out", str(root / "a.csv"), "--trace", str(root / "a.trace"))
    sh("run", "--topology", str(root / "line.topo"),
       "--scenario", str(root / "mixed.scen"),
       "--out", str(root / "b.csv"), "--trace", str(root / "b.trace"))
    print()

    a = (root / "a.csv").read_bytes()
    b = (root / "b.csv").read_bytes()
    same_trace = (root / "a.trace").read_bytes() == (root / "b.trace").read_bytes()
    print(f"csv identical: {a == b}   trace identical: {same_trace}")
    print()
    print("first rows:")
    for line in a.decode().splitlines()[:6]:
        print(f"  {line}")
