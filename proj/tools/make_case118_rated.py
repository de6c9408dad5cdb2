#!/usr/bin/env python3
"""Write data/case118_rated.m: the IEEE 118-bus case with branch ratings.

The stock case carries no usable ratings (rateA = 9900). Ratings here come
from an unconstrained economic dispatch of the stock costs:

    rating_l = ceil(max(1.15 * |f_l|, max_k |f_l after outage of k|, 20))

so the base case is N-1 secure in DC and every later outage removes margin.
Generator outputs are set to that dispatch. Needs pypower (pip install pypower).
"""

import argparse
import sys

import numpy as np
from pypower.case118 import case118

BASE_MARGIN = 1.15
FLOOR_MW = 20.0


def economic_dispatch(gen, gencost, demand):
    c2, c1, pmax = gencost[:, 4], gencost[:, 5], gen[:, 8]

    def output(lam):
        return np.clip((lam - c1) / (2.0 * c2), 0.0, pmax)

    lo, hi = 0.0, 1000.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if output(mid).sum() > demand:
            hi = mid
        else:
            lo = mid
    g = output(0.5 * (lo + hi))
    return g * demand / g.sum()


def dc_sensitivities(bus, branch, ref_bus):
    index = {int(b): i for i, b in enumerate(bus[:, 0])}
    n, m = len(bus), len(branch)
    frm = np.array([index[int(b)] for b in branch[:, 0]])
    to = np.array([index[int(b)] for b in branch[:, 1]])
    tap = np.where(branch[:, 8] == 0.0, 1.0, branch[:, 8])
    y = 1.0 / (branch[:, 3] * tap)
    a = np.zeros((m, n))
    a[np.arange(m), frm] = 1.0
    a[np.arange(m), to] = -1.0
    lap = a.T @ np.diag(y) @ a
    keep = [i for i in range(n) if i != index[ref_bus]]
    inv = np.zeros((n, n))
    inv[np.ix_(keep, keep)] = np.linalg.inv(lap[np.ix_(keep, keep)])
    ptdf = np.diag(y) @ a @ inv
    shift = ptdf @ a.T
    denom = 1.0 - np.diag(shift)
    islanding = np.abs(denom) < 1e-8
    lodf = shift / np.where(islanding, 1.0, denom)
    return index, ptdf, lodf, islanding


def fmt(row, ints):
    return "\t" + "\t".join(str(int(v)) if i in ints else f"{v:.6g}" for i, v in enumerate(row)) + ";"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/case118_rated.m")
    args = ap.parse_args()

    c = case118()
    bus, gen, branch, gencost = c["bus"], c["gen"].copy(), c["branch"].copy(), c["gencost"]
    ref_bus = int(bus[bus[:, 1] == 3][0, 0])
    demand = bus[:, 2].sum()
    gen[:, 1] = economic_dispatch(gen, gencost, demand)

    index, ptdf, lodf, islanding = dc_sensitivities(bus, branch, ref_bus)
    inj = -bus[:, 2].copy()
    for g in gen:
        inj[index[int(g[0])]] += g[1]
    flows = ptdf @ inj
    post = flows[:, None] + lodf * flows[None, :]
    post[:, islanding] = 0.0
    np.fill_diagonal(post, 0.0)
    worst = np.abs(post).max(axis=1)
    branch[:, 5] = np.ceil(np.maximum.reduce([BASE_MARGIN * np.abs(flows), worst, np.full(len(branch), FLOOR_MW)]))

    out = [
        "function mpc = case118_rated",
        "% IEEE 118-bus test case with synthetic branch ratings and an",
        "% economic-dispatch operating point. Generated by tools/make_case118_rated.py.",
        f"% rating = ceil(max({BASE_MARGIN} * |base flow|, worst N-1 flow, {FLOOR_MW:g})) MW",
        "mpc.version = '2';",
        f"mpc.baseMVA = {c['baseMVA']:g};",
        "",
        "%% bus data",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
        *(fmt(r[:13], {0, 1, 6, 10}) for r in bus),
        "];",
        "",
        "%% generator data",
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
        "mpc.gen = [",
        *(fmt(r[:10], {0, 7}) for r in gen),
        "];",
        "",
        "%% branch data",
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
        "mpc.branch = [",
        *(fmt(r[:13], {0, 1, 10}) for r in branch),
        "];",
        "",
        "%% generator cost data",
        "%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0",
        "mpc.gencost = [",
        *(fmt(r[:7], {0, 3}) for r in gencost),
        "];",
        "",
    ]
    with open(args.out, "w") as fh:
        fh.write("\n".join(out))
    print(f"wrote {args.out}: {len(bus)} buses, {len(branch)} branches, "
          f"{int(islanding.sum())} bridges, demand {demand:.0f} MW", file=sys.stderr)


if __name__ == "__main__":
    main()
