#!/usr/bin/env python3
"""Convert a MATPOWER version-2 case file (.m) to the gridstate JSON case schema.

Field correspondence (MATPOWER column -> JSON field):

  mpc.baseMVA                 -> base_mva
  bus  BUS_I                  -> buses[].id
  bus  BUS_TYPE 3/2/1         -> buses[].kind "Slack"/"PV"/"PQ"
  bus  PD, QD                 -> buses[].p_load_mw, buses[].q_load_mvar
  bus  GS, BS                 -> buses[].gs_mw, buses[].bs_mvar
  gen  VG  (first online gen) -> buses[].v_setpoint   (PV and Slack buses only)
  gen  PG, QG (sum, online)   -> buses[].p_gen_mw, buses[].q_gen_mvar
  bus  BASE_KV                -> buses[].base_kv
  branch F_BUS, T_BUS         -> branches[].from, branches[].to
  branch BR_R, BR_X, BR_B     -> branches[].r_pu, branches[].x_pu, branches[].b_pu
  branch TAP (0 means 1)      -> branches[].tap
  branch SHIFT (degrees)      -> branches[].shift_rad
  branch BR_STATUS            -> branches[].status "In"/"Out"

A PV bus with no online generator is written as PQ (MATPOWER does the same).
Files that convert branch data from Ohms and loads from kW in trailing code
(case69.m) are handled by --ohms-kw.
"""
import argparse
import json
import math
import re
import sys


def read_matrix(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if not m:
        raise SystemExit(f"missing mpc.{name}")
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";").strip()
        if not line:
            continue
        rows.append([float(v) for v in line.replace(",", " ").split()])
    return rows


def convert(text, ohms_kw):
    base_mva = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text).group(1))
    bus = read_matrix(text, "bus")
    gen = read_matrix(text, "gen")
    branch = read_matrix(text, "branch")

    if ohms_kw:
        vbase = bus[0][9] * 1e3
        zbase = vbase * vbase / (base_mva * 1e6)
        for br in branch:
            br[2] /= zbase
            br[3] /= zbase
        for b in bus:
            b[2] /= 1e3
            b[3] /= 1e3

    gens = {}
    for g in gen:
        if g[7] <= 0:
            continue
        entry = gens.setdefault(int(g[0]), {"p": 0.0, "q": 0.0, "vg": g[5]})
        entry["p"] += g[1]
        entry["q"] += g[2]

    buses = []
    for b in bus:
        bid = int(b[0])
        kind = {3: "Slack", 2: "PV", 1: "PQ"}[int(b[1])]
        g = gens.get(bid)
        if kind == "PV" and g is None:
            kind = "PQ"
        rec = {
            "id": bid,
            "kind": kind,
            "p_load_mw": b[2],
            "q_load_mvar": b[3],
            "gs_mw": b[4],
            "bs_mvar": b[5],
            "v_setpoint": g["vg"] if kind != "PQ" else None,
            "base_kv": b[9],
        }
        if g is not None:
            rec["p_gen_mw"] = g["p"]
            rec["q_gen_mvar"] = g["q"]
        buses.append(rec)

    branches = []
    for br in branch:
        branches.append({
            "from": int(br[0]),
            "to": int(br[1]),
            "r_pu": br[2],
            "x_pu": br[3],
            "b_pu": br[4],
            "tap": br[8] if br[8] != 0 else 1.0,
            "shift_rad": math.radians(br[9]),
            "status": "In" if br[10] > 0 else "Out",
        })
    return {"base_mva": base_mva, "buses": buses, "branches": branches}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("input")
    ap.add_argument("output")
    ap.add_argument("--ohms-kw", action="store_true",
                    help="branch r/x given in Ohms and loads in kW")
    args = ap.parse_args()
    with open(args.input) as f:
        case = convert(f.read(), args.ohms_kw)
    with open(args.output, "w") as f:
        json.dump(case, f, indent=1)
        f.write("\n")
    print(f"{args.output}: {len(case['buses'])} buses, {len(case['branches'])} branches",
          file=sys.stderr)


if __name__ == "__main__":
    main()
