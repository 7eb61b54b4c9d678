#!/usr/bin/env python3
"""Regenerate data/materials/*.csv and data/luminosity/*.csv.

Optical constants come from the refractiveindex.info database bundled with the
`optiland` package; the photopic luminosity curve comes from `colour-science`.

    pip install optiland colour-science
    python3 scripts/make_dispersion_data.py
"""
import os
import pathlib

import numpy as np
import yaml

import colour
import optiland
from optiland.materials import MaterialFile

ROOT = pathlib.Path(__file__).resolve().parents[1]
DB = pathlib.Path(optiland.__file__).parent / "database" / "data-nk" / "main"

# material id -> (refractiveindex.info shelf entry, page)
SOURCES = {
    "Ag": ("Ag", "Rakic-LD"),
    "Al": ("Al", "Rakic-LD"),
    "Al2O3": ("Al2O3", "Malitson"),
    "Cr": ("Cr", "Sytchkova"),
    "Fe2O3": ("Fe2O3", "Querry-e"),
    "Ge": ("Ge", "Nunley"),
    "HfO2": ("HfO2", "Al-Kuhaili"),
    "MgF2": ("MgF2", "Dodge-o"),
    "Ni": ("Ni", "Rakic-LD"),
    "Si": ("Si", "Schinke"),
    "SiO2": ("SiO2", "Malitson"),
    "Ti": ("Ti", "Johnson"),
    "TiO2": ("TiO2", "Siefke"),
    "ZnO": ("ZnO", "Querry"),
    "ZnS": ("ZnS", "Querry"),
    "ZnSe": ("ZnSe", "Amotchkina"),
    "SiN": ("Si3N4", "Luke"),
    "SiC": ("SiC", "Wang-4H-o"),
}

LO_NM, HI_NM = 200.0, 6000.0
FORMULA_STEP_NM = 5.0


def tabulated_rows(entry):
    rows = [[float(x) for x in line.split()] for line in entry["data"].strip().splitlines()]
    return np.array(rows)


def material_rows(shelf, page):
    path = DB / shelf / f"{page}.yml"
    doc = yaml.safe_load(path.read_text())
    data = doc["DATA"]
    nk = [e for e in data if e["type"] == "tabulated nk"]
    if nk:
        arr = tabulated_rows(nk[0])
        wl = arr[:, 0] * 1000.0
        keep = (wl >= LO_NM) & (wl <= HI_NM)
        # keep one bracketing sample on either side so interpolation is exact at the cut
        idx = np.where(keep)[0]
        lo = max(idx[0] - 1, 0)
        hi = min(idx[-1] + 1, len(wl) - 1)
        return [(wl[i], arr[i, 1], arr[i, 2]) for i in range(lo, hi + 1)]

    formula = [e for e in data if e["type"].startswith("formula")][0]
    span = [float(x) * 1000.0 for x in formula["wavelength_range"].split()]
    start = max(span[0], LO_NM)
    stop = min(span[1], HI_NM)
    grid = np.arange(np.ceil(start / FORMULA_STEP_NM) * FORMULA_STEP_NM, stop + 1e-9, FORMULA_STEP_NM)
    mf = MaterialFile(str(path))
    ktab = [e for e in data if e["type"] == "tabulated k"]
    karr = tabulated_rows(ktab[0]) if ktab else None
    rows = []
    for w in grid:
        n = float(np.squeeze(mf.n(w / 1000.0)))
        if karr is not None:
            k = float(np.interp(w / 1000.0, karr[:, 0], karr[:, 1]))
        else:
            k = 0.0
        rows.append((w, n, max(k, 0.0)))
    return rows


def main():
    out = ROOT / "data" / "materials"
    out.mkdir(parents=True, exist_ok=True)
    manifest = ["material,file,source"]
    for mat, (shelf, page) in SOURCES.items():
        rows = material_rows(shelf, page)
        with open(out / f"{mat}.csv", "w") as fh:
            fh.write("wavelength_nm,n,k\n")
            last = -1.0
            for w, n, k in rows:
                if w <= last:
                    continue
                last = w
                fh.write(f"{w:.4f},{n:.6g},{max(k, 0.0):.6g}\n")
        manifest.append(f"{mat},{mat}.csv,refractiveindex.info {shelf}/{page}")
        print(f"{mat:6s} {len(rows):5d} samples  {rows[0][0]:.1f}-{rows[-1][0]:.1f} nm  ({shelf}/{page})")
    (out / "manifest.csv").write_text("\n".join(manifest) + "\n")

    lum = ROOT / "data" / "luminosity"
    lum.mkdir(parents=True, exist_ok=True)
    sd = colour.colorimetry.SDS_LEFS_PHOTOPIC["CIE 2008 2 Degree Physiologically Relevant LEF"]
    with open(lum / "photopic_v.csv", "w") as fh:
        fh.write("wavelength_nm,V\n")
        for w, v in zip(sd.wavelengths, sd.values):
            fh.write(f"{w:.1f},{v:.6g}\n")


if __name__ == "__main__":
    main()
