#!/usr/bin/env python3
"""Regenerate the IEEE case files and merge manifests under tests/data.

Case data comes from PYPOWER (`pip install pypower`), which carries the
MATPOWER distributions of the IEEE test systems. Files are written in the
MATPOWER text layout so the C++ parser reads them unmodified.
"""
import os
import sys

from pypower import api

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "tests", "data")

CASES = ["case9", "case14", "case30", "case57", "case118", "case300"]

BUS_HDR = "bus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
GEN_HDR = ("bus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\t"
           "Qc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf")
BRANCH_HDR = "fbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"


def fmt(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def table(name, rows, header):
    out = ["%%\t" + header, "mpc.%s = [" % name]
    for r in rows:
        out.append("\t" + "\t".join(fmt(x) for x in r) + ";")
    out.append("];")
    return "\n".join(out)


def write_case(name):
    c = getattr(api, name)()
    text = [
        "function mpc = %s" % name,
        "%% exported from the PYPOWER copy of the MATPOWER case",
        "mpc.version = '2';",
        "",
        "%% system MVA base",
        "mpc.baseMVA = %s;" % fmt(c["baseMVA"]),
        "",
        "%% bus data",
        table("bus", c["bus"], BUS_HDR),
        "",
        "%% generator data",
        table("gen", c["gen"], GEN_HDR),
        "",
        "%% branch data",
        table("branch", c["branch"], BRANCH_HDR),
    ]
    if "gencost" in c:
        text += ["", "%% generator cost data", table("gencost", c["gencost"], "2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0")]
    with open(os.path.join(DATA, "cases", name + ".m"), "w") as f:
        f.write("\n".join(text) + "\n")


TIE = "0.005 0.05 0.02 1 0"


def write_manifest(name, regions, links, slack_region, comment):
    lines = ["# " + comment]
    lines += ["region ../cases/%s.m" % r for r in regions]
    lines += ["link %d %d %d %d %s" % (a, ba, b, bb, TIE) for a, ba, b, bb in links]
    lines.append("slack_region %d" % slack_region)
    with open(os.path.join(DATA, "fixtures", name + ".manifest"), "w") as f:
        f.write("\n".join(lines) + "\n")


def solved_reference(name):
    """Full-precision Newton solution of a case (q limits off), for tests."""
    from pypower.api import ppoption, runpf
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-13, PF_MAX_IT=30)
    res, ok = runpf(getattr(api, name)(), opt)
    assert ok
    with open(os.path.join(DATA, "cases", name + ".solution"), "w") as f:
        f.write("% bus_i  Vm  Va(deg)  solved by PYPOWER Newton, tol 1e-13\n")
        for row in res["bus"]:
            f.write("%d %.15g %.15g\n" % (int(row[0]), row[7], row[8]))


def main():
    for name in CASES:
        write_case(name)
    for name in ["case14", "case30", "case57"]:
        solved_reference(name)

    write_manifest("case14_single", ["case14"], [], 0, "IEEE 14-bus as a single region")
    write_manifest("two_case14", ["case14", "case14"], [(0, 9, 1, 4)], 0,
                   "two IEEE 14-bus copies joined by one tie line")
    # 9 + 14 + 30 = 53 buses, 5 tie lines -> 40 coupling entries
    write_manifest("case53_3reg", ["case9", "case14", "case30"],
                   [(0, 5, 1, 4), (0, 7, 1, 10), (1, 12, 2, 3), (1, 13, 2, 4), (1, 14, 2, 10)],
                   1, "three regions, 53 buses")
    # 118 + 300 = 418 buses, 3 tie lines -> 24 coupling entries
    write_manifest("case418_2reg", ["case118", "case300"],
                   [(0, 20, 1, 212), (0, 21, 1, 216), (0, 33, 1, 228)],
                   0, "two regions, 418 buses")
    # 10 x 118 = 1180 buses, ring of 10 tie lines plus one chord -> 88 coupling entries
    ring = [(i, 20, (i + 1) % 10, 21) for i in range(10)] + [(0, 33, 5, 35)]
    write_manifest("case1180_10reg", ["case118"] * 10, ring, 0, "ten regions, 1180 buses")


if __name__ == "__main__":
    sys.exit(main())
