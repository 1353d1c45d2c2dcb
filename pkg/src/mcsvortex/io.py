"""Persistence: profiles, states, Green tables and CSV tables.

Every write goes to a temporary file in the target directory and is then
renamed into place, so an interrupted run never leaves a partial file.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .elliptic import Background, McsState
from .green import GreenTable, TorusLattice, VortexSet
from .radial import RadialProfile, ShootingConfig
from .spectral import Grid

__all__ = [
    "atomic_write", "write_csv", "format_value", "save_profile", "load_profile",
    "save_state", "load_state", "green_cache_key", "cache_dir", "load_green_table",
    "CACHE_ENV",
]

CACHE_ENV = "MCSVORTEX_CACHE"
STATE_MAGIC = b"MCSSTATE1\n"
GREEN_MAGIC = b"MCSGREEN1\n"


def atomic_write(path, data: bytes | str):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(x) -> str:
    """Deterministic text for a CSV cell (floats in ``%.12e``)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12e}"
    return str(x)


def write_csv(path, header, rows):
    """Atomically write a CSV table with ``\\n`` line endings."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------------------
# profiles: '#'-prefixed JSON header line, then columns r, w, w'

def save_profile(profile: RadialProfile, path):
    header = {
        "m": profile.m, "s": profile.s, "beta": profile.beta, "a1": profile.a1,
        "I1": profile.I1, "r_max": profile.r_max, "fit_window": list(profile.fit_window),
        "fit_residual": profile.fit_residual, "beta_slope": profile.beta_slope,
        "integrator": profile.integrator,
    }
    buf = _io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write("# r w w_prime\n")
    for r, w, dw in zip(profile.r_grid, profile.w, profile.w_prime):
        buf.write(f"{r:.17e} {w:.17e} {dw:.17e}\n")
    atomic_write(path, buf.getvalue())


def load_profile(path) -> RadialProfile:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing JSON header line")
        h = json.loads(first[2:])
        data = np.loadtxt(fh, comments="#", ndmin=2)
    lo, hi = h["fit_window"]
    cfg = ShootingConfig(r_max=h["r_max"], fit_window=(lo, hi))
    return RadialProfile(
        m=int(h["m"]), s=float(h["s"]), r_grid=data[:, 0], w=data[:, 1], w_prime=data[:, 2],
        beta=float(h["beta"]), a1=float(h["a1"]), I1=float(h["I1"]), r_max=float(h["r_max"]),
        fit_window=(lo, hi), fit_residual=float(h["fit_residual"]),
        beta_slope=float(h["beta_slope"]), integrator=h["integrator"], config=cfg,
    )


# ---------------------------------------------------------------------------
# states: magic, header length, JSON header, raw little-endian float64 grids

def _pack(magic: bytes, header: dict, arrays) -> bytes:
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [magic, len(hb).to_bytes(8, "little"), hb]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    return b"".join(parts)


def _unpack(magic: bytes, blob: bytes, count: int):
    if not blob.startswith(magic):
        raise ValueError("unrecognised container")
    k = len(magic)
    size = int.from_bytes(blob[k:k + 8], "little")
    header = json.loads(blob[k + 8:k + 8 + size].decode("utf-8"))
    raw = np.frombuffer(blob[k + 8 + size:], dtype="<f8")
    n = header["n"]
    if raw.size != count * n * n:
        raise ValueError("container payload has the wrong size")
    return header, [raw[i * n * n:(i + 1) * n * n].reshape(n, n).copy() for i in range(count)]


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, (str, int, float, bool)) or v is None:
            out[k] = v
    return out


def save_state(state: McsState, path):
    g = state.grid
    vs = state.vortices
    header = {
        "n": g.n, "lattice": [list(g.lattice.a1), list(g.lattice.a2)],
        "points": [list(p) for p in vs.points], "multiplicities": list(vs.multiplicities),
        "lam": state.lam, "mu": state.mu, "residual_norm": state.residual_norm,
        "newton_iters": state.newton_iters, "info": _jsonable(state.info),
    }
    atomic_write(path, _pack(STATE_MAGIC, header, [state.v, state.N]))


def load_state(path, background: Background | None = None) -> McsState:
    """Read a state; the background is rebuilt unless a matching one is given."""
    header, (v, N) = _unpack(STATE_MAGIC, Path(path).read_bytes(), 2)
    if background is None:
        a1, a2 = header["lattice"]
        lat = TorusLattice(tuple(a1), tuple(a2))
        vs = VortexSet([tuple(p) for p in header["points"]], header["multiplicities"])
        background = Background(Grid(lat, header["n"]), vs)
    elif background.grid.n != header["n"]:
        raise ValueError("background grid does not match the stored state")
    return McsState(v=v, N=N, lam=header["lam"], mu=header["mu"], background=background,
                    residual_norm=header["residual_norm"], newton_iters=header["newton_iters"],
                    info=dict(header["info"]))


# ---------------------------------------------------------------------------
# Green table cache

def cache_dir() -> Path | None:
    """Cache directory from the environment, or ``None`` when unset."""
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else None


def green_cache_key(lattice: TorusLattice, n: int, pole=(0.0, 0.0)) -> str:
    desc = json.dumps({"a1": [float(v).hex() for v in lattice.a1],
                       "a2": [float(v).hex() for v in lattice.a2],
                       "n": int(n), "pole": [float(v).hex() for v in pole]}, sort_keys=True)
    return hashlib.sha256(desc.encode("ascii")).hexdigest()[:24]


def load_green_table(lattice: TorusLattice, n: int, pole=(0.0, 0.0),
                     directory=None) -> GreenTable:
    """Green table for ``(lattice, n, pole)``, read from or stored in the cache.

    Without a directory (argument or environment) the table is just built.
    """
    directory = Path(directory) if directory is not None else cache_dir()
    if directory is None:
        return GreenTable(lattice, n, pole)
    path = directory / f"green-{green_cache_key(lattice, n, pole)}.bin"
    if path.exists():
        header, (gamma, dist) = _unpack(GREEN_MAGIC, path.read_bytes(), 2)
        t = object.__new__(GreenTable)
        t.lattice, t.n, t.pole = lattice, n, tuple(float(v) for v in pole)
        t.gamma, t.distance = gamma, dist
        with np.errstate(divide="ignore"):
            t.G = gamma - np.log(dist) / (2 * math.pi)
        return t
    t = GreenTable(lattice, n, pole)
    header = {"n": n, "lattice": [list(lattice.a1), list(lattice.a2)], "pole": list(t.pole)}
    atomic_write(path, _pack(GREEN_MAGIC, header, [t.gamma, t.distance]))
    return t
