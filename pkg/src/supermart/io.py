"""Artifact serialization: JSON reports and bulk path CSVs.

Every artifact opens with a metadata block (tool version, config hash, master
seed) and is written deterministically: sorted JSON keys, 17-significant-digit
floats, no timestamps.  Identical config + seed must produce byte-identical
files regardless of thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os

import numpy as np

__all__ = [
    "config_hash",
    "jsonable",
    "write_json",
    "write_paths_csv",
    "write_jumps_csv",
    "read_paths_csv",
    "write_curves_csv",
]

_FMT = "{:.17g}"


def config_hash(obj) -> str:
    blob = json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def jsonable(obj):
    """Recursively convert to plain JSON types; infinities become "inf"."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: str, payload: dict, meta: dict) -> None:
    doc = {"meta": jsonable(meta)}
    doc.update(jsonable(payload))
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _meta_lines(meta: dict) -> list:
    return [f"# {k}: {meta[k]}" for k in sorted(meta)]


def write_paths_csv(path: str, ensemble, meta: dict) -> None:
    """Bulk path table: ``path_id,t,mass_1..mass_d,M`` with 17 digits."""
    d = len(ensemble.phi)
    times = np.asarray(ensemble.times)
    cols = ",".join(f"mass_{i + 1}" for i in range(d))
    with open(path, "w") as fh:
        for line in _meta_lines(meta):
            fh.write(line + "\n")
        fh.write(f"path_id,t,{cols},M\n")
        for pid in range(ensemble.n_paths):
            m_row = ensemble.M[pid]
            mass_row = ensemble.masses[pid] if ensemble.masses is not None else None
            for j, t in enumerate(times):
                masses = (
                    ",".join(_FMT.format(v) for v in mass_row[j])
                    if mass_row is not None
                    else ",".join("nan" for _ in range(d))
                )
                fh.write(
                    f"{pid},{_FMT.format(t)},{masses},{_FMT.format(m_row[j])}\n"
                )


def write_jumps_csv(path: str, ensemble, meta: dict) -> None:
    """Sidecar jump log: ``path_id,t,type,size`` (types are 1-based)."""
    with open(path, "w") as fh:
        for line in _meta_lines(meta):
            fh.write(line + "\n")
        fh.write("path_id,t,type,size\n")
        if ensemble.jumps is None:
            return
        for pid, arr in enumerate(ensemble.jumps):
            for t, ty, r in np.asarray(arr).reshape(-1, 3):
                fh.write(f"{pid},{_FMT.format(t)},{int(ty) + 1},{_FMT.format(r)}\n")


def read_paths_csv(path: str):
    """Rebuild an Ensemble-shaped object from a paths CSV (plus meta dict).

    ``lam`` and ``phi`` are recovered from the metadata block.
    """
    from .sim.records import Ensemble

    meta = {}
    with open(path) as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
            pos = fh.tell()
            line = fh.readline()
        header = line.strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    d = len([h for h in header if h.startswith("mass_")])
    pids = data[:, 0].astype(int)
    n_paths = pids.max() + 1
    n_times = len(data) // n_paths
    times = data[:n_times, 1]
    masses = data[:, 2 : 2 + d].reshape(n_paths, n_times, d)
    m = data[:, 2 + d].reshape(n_paths, n_times)
    lam = float(meta.get("lambda", "nan"))
    phi = np.array([float(v) for v in meta.get("phi", "").split()]) if meta.get("phi") else None
    if phi is None or len(phi) != d:
        phi = np.ones(d)
    return Ensemble(times=times, M=m, masses=masses, lam=lam, phi=phi), meta


def write_curves_csv(path: str, rows, meta: dict) -> None:
    """Per-path functional curves: ``path_id,kind,t,value``."""
    with open(path, "w") as fh:
        for line in _meta_lines(meta):
            fh.write(line + "\n")
        fh.write("path_id,kind,t,value\n")
        for pid, kind, t, v in rows:
            fh.write(f"{pid},{kind},{_FMT.format(t)},{_FMT.format(v)}\n")


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
