"""Command-line entry point and experiment pipelines.

Configuration is an INI file.  Section ``[run]`` lists the pipelines to run
and the shared defaults; each pipeline reads the section of the same name,
which may override ``side``, ``points``, ``multiplicities`` and ``grid``.
A pipeline may be listed as ``kind.label`` (e.g. ``blowup.vortex``) to run
one kind twice with different sections; outputs go to ``<out>/<name>``.  See the
README for the full key list.

Exit codes: 0 when every invariant holds, 1 on an invariant violation,
2 on a solver failure, 3 on an invalid configuration.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as mio
from .blowup import (build_approx, fixed_point, polish, reassemble, reduced_gradient,
                     residuals, solve_reduced)
from .diagnostics import (ClassifyThresholds, balance_residual, classify, cs_deviation,
                          gradient_bound, local_mass, mass_total, pohozaev_residual,
                          reconstruct_gauge)
from .elliptic import (Background, McsState, SolverParams, check_invariants, continuation, cs_newton,
                       mcs_residual, topological_init)
from .errors import ConfigInvalid, InvariantViolation, McsError
from .green import TorusLattice, VortexSet, critical_points
from .radial import check_integral_identities, shoot, solve_for_beta
from .spectral import Grid

log = logging.getLogger("mcsvortex")

PIPELINES = ("profile", "green", "solve-cs", "solve-mcs", "sweep", "blowup", "diagnose")
EXIT_OK, EXIT_INVARIANT, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration

class Section:
    """Typed view of one config section with fallback to shared sections."""

    def __init__(self, cp: configparser.ConfigParser, name: str, fallbacks=()):
        self.cp = cp
        self.name = name
        self.fallbacks = tuple(fallbacks)

    def _lookup(self, key):
        for sec in (self.name,) + self.fallbacks:
            if self.cp.has_section(sec) and self.cp.has_option(sec, key):
                return sec, self.cp.get(sec, key)
        return None, None

    def has(self, key) -> bool:
        return self._lookup(key)[0] is not None

    def _bad(self, sec, key, msg):
        line = getattr(self.cp, "_lines", {}).get((sec, key))
        where = f"line {line}: " if line else ""
        return ConfigInvalid(f"{where}[{sec}] {key}: {msg}")

    def raw(self, key, default=None, required=False):
        sec, val = self._lookup(key)
        if sec is None:
            if required:
                raise ConfigInvalid(f"[{self.name}] {key}: missing required key")
            return default
        return val.strip()

    def num(self, key, default=None, kind=float, required=False):
        sec, val = self._lookup(key)
        if sec is None:
            if required:
                raise ConfigInvalid(f"[{self.name}] {key}: missing required key")
            return default
        try:
            return kind(val)
        except ValueError:
            raise self._bad(sec, key, f"expected {kind.__name__}, got {val!r}") from None

    def nums(self, key, default=None, kind=float, required=False):
        sec, val = self._lookup(key)
        if sec is None:
            if required:
                raise ConfigInvalid(f"[{self.name}] {key}: missing required key")
            return default
        items = val.replace(",", " ").split()
        try:
            return [kind(v) for v in items]
        except ValueError:
            raise self._bad(sec, key, f"expected a list of {kind.__name__}") from None

    def points(self, key, default=None):
        sec, val = self._lookup(key)
        if sec is None:
            return default
        out = []
        for chunk in val.split(";"):
            chunk = chunk.replace(",", " ").split()
            if not chunk:
                continue
            if len(chunk) != 2:
                raise self._bad(sec, key, "points are 'x y' pairs separated by ';'")
            try:
                out.append((float(chunk[0]), float(chunk[1])))
            except ValueError:
                raise self._bad(sec, key, "non-numeric coordinate") from None
        return out


class _LineParser(configparser.ConfigParser):
    """ConfigParser that remembers the line of every option."""

    def _read(self, fp, fpname):
        lines = list(fp)
        self._lines = {}
        sec = None
        for i, line in enumerate(lines, 1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                sec = s[1:-1].strip()
            elif sec and s and not s.startswith(("#", ";")) and "=" in s:
                self._lines[(sec, s.split("=", 1)[0].strip().lower())] = i
        return super()._read(iter(lines), fpname)


def read_config(path) -> configparser.ConfigParser:
    cp = _LineParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        return cp
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"config file {path} does not exist")
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    return cp


@dataclass
class Setting:
    """Lattice, vortices and grid resolved for one pipeline."""

    lattice: TorusLattice
    vortices: VortexSet
    n: int

    def background(self) -> Background:
        return Background(Grid(self.lattice, self.n), self.vortices)


def _setting(sec: Section, grid_override=None) -> Setting:
    if sec.has("a1"):
        a1, a2 = sec.nums("a1", required=True), sec.nums("a2", required=True)
        if len(a1) != 2 or len(a2) != 2:
            raise ConfigInvalid(f"[{sec.name}] a1/a2: need two components each")
        try:
            lat = TorusLattice(tuple(a1), tuple(a2))
        except ValueError as exc:
            raise ConfigInvalid(f"[{sec.name}] a1/a2: {exc}") from None
    else:
        side = sec.num("side", 1.0)
        if side <= 0:
            raise ConfigInvalid(f"[{sec.name}] side: must be positive")
        lat = TorusLattice.square(side)
    pts = sec.points("points")
    mult = sec.nums("multiplicities", kind=int)
    if not pts:
        raise ConfigInvalid(f"[{sec.name}] points: at least one vortex is required")
    if mult is None:
        mult = [1] * len(pts)
    try:
        vs = VortexSet(pts, mult)
    except ValueError as exc:
        raise ConfigInvalid(f"[{sec.name}] points/multiplicities: {exc}") from None
    n = grid_override or sec.num("grid", 128, int)
    if n < 16 or n % 2:
        raise ConfigInvalid(f"[{sec.name}] grid: need an even size >= 16")
    return Setting(lat, vs, n)


def _params(cp) -> SolverParams:
    sec = Section(cp, "solver")
    kw = {}
    for key, kind in (("newton_tol", float), ("max_iters", int), ("damping", float),
                      ("continuation_steps", int), ("gmres_rtol", float),
                      ("gmres_restart", int), ("gmres_maxiter", int)):
        if sec.has(key):
            kw[key] = sec.num(key, kind=kind)
    try:
        return SolverParams(**kw)
    except ValueError as exc:
        raise ConfigInvalid(f"[solver] {exc}") from None


def mu_rule(lam: float, coeff=1.0, power=1.0, logpow=0.0, cap=math.inf) -> float:
    """Coupling ``mu = min(coeff * lam^power * (ln lam)^logpow, cap)``."""
    return min(coeff * lam**power * math.log(lam) ** logpow, cap)


def _lambdas(sec: Section):
    if sec.has("lambda"):
        lams = sec.nums("lambda")
    elif sec.has("lambda_start"):
        start = sec.num("lambda_start")
        ratio = sec.num("lambda_ratio", 2.0)
        count = sec.num("lambda_count", 3, int)
        lams = [start * ratio**k for k in range(count)]
    else:
        raise ConfigInvalid(f"[{sec.name}] lambda: missing parameter path")
    if not lams:
        raise ConfigInvalid(f"[{sec.name}] lambda: empty parameter path")
    if any(x <= 1 for x in lams):
        raise ConfigInvalid(f"[{sec.name}] lambda: values must exceed 1")
    return lams


def _path(sec: Section):
    """``[(lam, mu), ...]`` from explicit lists or the coupling rule."""
    lams = _lambdas(sec)
    if sec.has("mu"):
        mus = sec.nums("mu")
        if len(mus) == 1:
            mus = mus * len(lams)
        if len(mus) != len(lams):
            raise ConfigInvalid(f"[{sec.name}] mu: length must match lambda")
    else:
        coeff = sec.num("mu_coeff", 1.0)
        power = sec.num("mu_power", 1.0)
        logp = sec.num("mu_log", 0.0)
        cap = sec.num("mu_cap", math.inf)
        mus = [mu_rule(x, coeff, power, logp, cap) for x in lams]
    if any(m <= 0 for m in mus):
        raise ConfigInvalid(f"[{sec.name}] mu: values must be positive")
    return list(zip(lams, mus))


# ---------------------------------------------------------------------------
# run context

@dataclass
class Context:
    cp: configparser.ConfigParser
    out: Path
    threads: int = 1
    grid: int | None = None
    violations: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def section(self, name):
        return Section(self.cp, name, ("vortices", "lattice", "run"))

    def map(self, fn, jobs):
        """Apply ``fn`` to the jobs, merged in job order."""
        jobs = list(jobs)
        if self.threads <= 1 or len(jobs) <= 1:
            return [fn(j) for j in jobs]
        with ProcessPoolExecutor(max_workers=min(self.threads, len(jobs))) as ex:
            return list(ex.map(fn, jobs))

    def violate(self, msg):
        log.error("invariant violation: %s", msg)
        self.violations.append(msg)

    def fail(self, msg):
        log.error("solver failure: %s", msg)
        self.failures.append(msg)


def _fmt_s(s):
    return f"{s:+.6g}".replace("+", "p").replace("-", "m").replace(".", "_")


# ---------------------------------------------------------------------------
# profile

def _profile_job(job):
    s, m, tol, outdir = job
    row = {"m": m, "s": s}
    try:
        p = shoot(s, m)
        rep = check_integral_identities(p)
    except McsError as exc:
        row.update(status=type(exc).__name__)
        return row
    mio.save_profile(p, Path(outdir) / f"profile_m{m}_s{_fmt_s(s)}.txt")
    row.update(status="ok", beta=p.beta, beta_slope=p.beta_slope, a1=p.a1, I1=p.I1,
               int_e2w=rep.int_e2w, int_e2w_exact=rep.expected_e2w, int_ew=rep.int_ew,
               int_ew_exact=rep.expected_ew, rel_err=rep.max_deviation, tol=tol)
    return row


PROFILE_COLS = ["m", "s", "status", "beta", "beta_slope", "a1", "I1", "int_e2w",
                "int_e2w_exact", "int_ew", "int_ew_exact", "rel_err"]


def run_profile(ctx: Context, name: str = "profile"):
    sec = ctx.section(name)
    ss = sec.nums("s", [-0.25, -0.5, -1.0, -2.0, -4.0, -8.0])
    ms = sec.nums("m", [0], int)
    tol = sec.num("tolerance", 1e-4)
    if not ss or any(s >= 0 for s in ss):
        raise ConfigInvalid("[profile] s: need a nonempty list of negative values")
    if any(m < 0 for m in ms):
        raise ConfigInvalid("[profile] m: multiplicities must be >= 0")
    outdir = ctx.out / name
    rows = ctx.map(_profile_job, [(s, m, tol, str(outdir)) for m in ms for s in ss])
    for r in rows:
        if r["status"] != "ok":
            ctx.fail(f"profile m={r['m']} s={r['s']}: {r['status']}")
        elif r["rel_err"] > tol:
            ctx.violate(f"profile m={r['m']} s={r['s']}: identity error {r['rel_err']:.2e}")
    mio.write_csv(outdir / "profiles.csv", PROFILE_COLS,
                  [[r.get(c, math.nan) for c in PROFILE_COLS] for r in rows])


# ---------------------------------------------------------------------------
# green

def run_green(ctx: Context, name: str = "green"):
    sec = ctx.section(name)
    st = _setting(sec, ctx.grid)
    bg = st.background()
    table = mio.load_green_table(st.lattice, st.n, st.vortices.points[0])
    g = bg.grid
    pts = g.points.reshape(-1, 2)
    outdir = ctx.out / name
    with np.errstate(invalid="ignore"):
        rows = zip(pts[:, 0], pts[:, 1], table.G.ravel(), table.gamma.ravel(), bg.u0.ravel())
    mio.write_csv(outdir / "grids.csv", ["t1", "t2", "G", "gamma", "u0"], rows)
    found, failed = critical_points(st.lattice, st.vortices)
    mio.write_csv(outdir / "critical_points.csv",
                  ["t1", "t2", "value", "index", "nondegenerate", "hess_xx", "hess_xy", "hess_yy"],
                  [[c.q[0], c.q[1], c.value, c.index, c.nondegenerate,
                    c.hessian[0, 0], c.hessian[0, 1], c.hessian[1, 1]] for c in found])
    if failed:
        log.info("%d critical point seeds did not converge", len(failed))


# ---------------------------------------------------------------------------
# topological solves

STATE_COLS = ["lambda", "mu", "mass", "mass_rel_err", "balance_rel_err", "cs_deviation",
              "min_N", "max_N_over_lambda", "max_u", "gradient_bound", "flux_rel_err",
              "residual", "iters"]


def _state_row(state):
    M = state.vortices.total
    mass = mass_total(state)
    flux = reconstruct_gauge(state)["flux"]
    u = state.u
    return {
        "lambda": state.lam, "mu": state.mu, "mass": mass,
        "mass_rel_err": abs(mass / (4 * math.pi * M) - 1),
        "balance_rel_err": balance_residual(state), "cs_deviation": cs_deviation(state),
        "min_N": float(np.min(state.N)), "max_N_over_lambda": float(np.max(state.N)) / state.lam,
        "max_u": float(np.max(u[np.isfinite(u)])), "gradient_bound": gradient_bound(state),
        "flux_rel_err": abs(flux / (-2 * math.pi * M) - 1),
        "residual": state.residual_norm, "iters": state.newton_iters,
    }


def _check_state_row(ctx, row, label, tol=1e-6):
    if row["mass_rel_err"] > tol:
        ctx.violate(f"{label}: mass error {row['mass_rel_err']:.2e}")
    if row["flux_rel_err"] > tol:
        ctx.violate(f"{label}: flux error {row['flux_rel_err']:.2e}")
    if row.get("balance_rel_err", 0) > tol:
        ctx.violate(f"{label}: balance error {row['balance_rel_err']:.2e}")
    if not (row["max_u"] < 0 and row["min_N"] > 0 and row["max_N_over_lambda"] < 1):
        ctx.violate(f"{label}: sign bounds u<0, 0<N<lambda broken")


def refine_path(path, cap: float = 0.25):
    """Insert geometric intermediates so no step changes lam or mu by more than ``cap``."""
    out = [tuple(map(float, path[0]))]
    for (l0, m0), (l1, m1) in zip(path, path[1:]):
        ratio = max(abs(math.log(l1 / l0)), abs(math.log(m1 / m0)))
        k = max(1, math.ceil(ratio / math.log(1 + cap) - 1e-12))
        for j in range(1, k + 1):
            out.append((l0 * (l1 / l0) ** (j / k), m0 * (m1 / m0) ** (j / k)))
        out[-1] = (float(l1), float(m1))
    return out


def _chain_job(job):
    setting, path, params, outdir, tag = job
    bg = setting.background()
    try:
        states = continuation(refine_path(path), bg, params)
    except McsError as exc:
        return {"error": f"{type(exc).__name__}: {exc}", "rows": []}
    wanted = {(float(a), float(b)) for a, b in path}
    rows = []
    for st in states:
        if (st.lam, st.mu) not in wanted:
            continue  # bisection intermediates
        mio.save_state(st, Path(outdir) / "states" / f"{tag}_lam{st.lam:g}_mu{st.mu:g}.state")
        rows.append(_state_row(st))
    return {"error": None, "rows": rows}


def _emit_chains(ctx, results, outdir, name):
    rows = []
    for res in results:
        if res["error"]:
            ctx.fail(f"{name}: {res['error']}")
        rows.extend(res["rows"])
    for r in rows:
        _check_state_row(ctx, r, f"{name} lam={r['lambda']:g} mu={r['mu']:g}")
    mio.write_csv(outdir / f"{name}.csv", STATE_COLS, [[r[c] for c in STATE_COLS] for r in rows])
    return rows


def run_solve_mcs(ctx: Context, name: str = "solve-mcs"):
    sec = ctx.section(name)
    st = _setting(sec, ctx.grid)
    path = _path(sec)
    params = _params(ctx.cp)
    outdir = ctx.out / name
    # each point starts from the topological seed, so points are independent
    jobs = [(st, [pt], params, str(outdir), "mcs") for pt in path]
    _emit_chains(ctx, ctx.map(_chain_job, jobs), outdir, name)


def run_sweep(ctx: Context, name: str = "sweep"):
    """One continuation chain per ``lambda`` along the ``mu`` list."""
    sec = ctx.section(name)
    st = _setting(sec, ctx.grid)
    lams = _lambdas(sec)
    mus = sec.nums("mu", required=True)
    if not mus:
        raise ConfigInvalid("[sweep] mu: empty parameter path")
    params = _params(ctx.cp)
    outdir = ctx.out / name
    jobs = [(st, [(lam, mu) for mu in mus], params, str(outdir), f"sweep{i}")
            for i, lam in enumerate(lams)]
    rows = _emit_chains(ctx, ctx.map(_chain_job, jobs), outdir, name)
    if sec.num("require_monotone", 0, int):
        for lam in lams:
            dev = [r["cs_deviation"] for r in rows if r["lambda"] == lam]
            if any(b >= a for a, b in zip(dev, dev[1:])):
                ctx.violate(f"sweep lam={lam:g}: cs_deviation not decreasing in mu")


def _cs_job(job):
    setting, lam, params, outdir = job
    bg = setting.background()
    v0, _ = topological_init(lam, 1e12, bg)
    try:
        v, info = cs_newton(lam, bg, v0, params)
    except McsError as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    g = bg.grid
    eu = np.exp(v) * bg.expu0
    mass = g.integrate(lam**2 * eu * (1 - eu))
    M = setting.vortices.total
    with np.errstate(divide="ignore"):
        u = v + bg.u0
    state = McsState(v=v, N=lam * eu, lam=lam, mu=math.inf, background=bg,
                     residual_norm=info["residual_norm"], newton_iters=info["newton_iters"])
    mio.save_state(state, Path(outdir) / "states" / f"cs_lam{lam:g}.state")
    return {"error": None, "lambda": lam, "mass_rel_err": abs(mass / (4 * math.pi * M) - 1),
            "max_u": float(np.max(u[np.isfinite(u)])), "residual": info["residual_norm"],
            "iters": info["newton_iters"]}


def run_solve_cs(ctx: Context, name: str = "solve-cs"):
    sec = ctx.section(name)
    st = _setting(sec, ctx.grid)
    lams = _lambdas(sec)
    params = _params(ctx.cp)
    outdir = ctx.out / name
    res = ctx.map(_cs_job, [(st, lam, params, str(outdir)) for lam in lams])
    cols = ["lambda", "mass_rel_err", "max_u", "residual", "iters"]
    rows = []
    for r in res:
        if r["error"]:
            ctx.fail(f"solve-cs: {r['error']}")
            continue
        if r["mass_rel_err"] > 1e-6:
            ctx.violate(f"solve-cs lam={r['lambda']:g}: mass error {r['mass_rel_err']:.2e}")
        if r["max_u"] >= 0:
            ctx.violate(f"solve-cs lam={r['lambda']:g}: u not negative")
        rows.append([r[c] for c in cols])
    mio.write_csv(outdir / f"{name}.csv", cols, rows)


# ---------------------------------------------------------------------------
# blow-up construction

BLOWUP_COLS = ["lambda", "mu", "theta", "theta_asymptotic", "interface_jump", "g1_Y",
               "g1_Y_scaled", "fp_converged", "fp_iterations", "contraction",
               "correction_norm", "ball_radius", "reduced_grad_x", "reduced_grad_y",
               "reduced_grad_norm", "local_mass_ratio", "max_u", "mass_rel_err",
               "flux_rel_err", "q_shift", "construction_residual", "polish_residual",
               "pohozaev"]


def _blowup_job(job):
    (setting, kind, lam, mu, q, d, s, m, alpha, tol, mass_radius, do_reduce, do_polish,
     outdir) = job
    bg = setting.background()
    M = setting.vortices.total
    row = {"lambda": lam, "mu": mu}
    try:
        prof = shoot(s, m)
        if kind == "regular" and do_reduce:
            red = solve_reduced(lam, mu, q, d, prof, bg, fp_tol=tol, alpha=alpha)
            A, fp = red.initial
            final_A, final_fp = red.approx, red.result
            q_shift = float(bg.lattice.distance(np.array(red.q), np.array(q)))
        else:
            A = build_approx(kind, lam, mu, q, d, prof, bg)
            fp = fixed_point(A, tol=tol, alpha=alpha)
            final_A, final_fp, q_shift = A, fp, 0.0
        g1 = residuals(A)["g1_Y_alpha"]
        if kind == "regular":
            rg = reduced_gradient(A, fp.pair)["gradient"]
        else:
            rg = np.array([math.nan, math.nan])
        state = reassemble(final_A, final_fp.pair)
        r1, r2 = mcs_residual(lam, mu, bg, state.v, state.N)
        built = max(float(np.max(np.abs(r1))), float(np.max(np.abs(r2))))
        if do_polish:
            state = polish(state)
        else:
            state.residual_norm = built
    except McsError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    mio.save_state(state, Path(outdir) / "states" / f"{kind}_lam{lam:g}.state")
    u = state.u
    flux = reconstruct_gauge(state)["flux"]
    row.update(
        error=None, theta=A.theta, theta_asymptotic=A.theta_asymptotic,
        interface_jump=A.interface_jump, g1_Y=g1, g1_Y_scaled=g1 * lam / math.sqrt(math.log(lam)),
        fp_converged=fp.converged and final_fp.converged, fp_iterations=fp.iterations,
        contraction=fp.contraction, correction_norm=fp.pair.norms["total"],
        ball_radius=A.ball_radius(), reduced_grad_x=float(rg[0]), reduced_grad_y=float(rg[1]),
        reduced_grad_norm=float(np.hypot(*rg)),
        local_mass_ratio=local_mass(state, q, mass_radius) / (4 * math.pi * M),
        max_u=float(np.max(u[np.isfinite(u)])),
        mass_rel_err=abs(mass_total(state) / (4 * math.pi * M) - 1),
        flux_rel_err=abs(flux / (-2 * math.pi * M) - 1), q_shift=q_shift,
        construction_residual=built, polish_residual=state.residual_norm,
        pohozaev=pohozaev_residual(state, q, min(d, 0.45 * state.grid.lattice.injectivity_radius)),
        min_N=float(np.min(state.N)), max_N_over_lambda=float(np.max(state.N)) / lam,
    )
    return row


def _default_q(kind, setting):
    if kind == "vortex":
        return setting.vortices.points[0], setting.vortices.multiplicities[0]
    found, _ = critical_points(setting.lattice, setting.vortices)
    good = [c for c in found if c.nondegenerate]
    if not good:
        raise McsError("u0 has no nondegenerate critical point")
    best = max(good, key=lambda c: c.value)
    return best.q, 0


def run_blowup(ctx: Context, name: str = "blowup", kind=None, mass=None, lambdas=None, q=None):
    sec = ctx.section(name)
    st = _setting(sec, ctx.grid)
    kind = kind or sec.raw("kind", "regular")
    if kind not in ("regular", "vortex"):
        raise ConfigInvalid(f"[blowup] kind: expected regular or vortex, got {kind!r}")
    M = mass if mass is not None else sec.num("mass", st.vortices.total, int)
    if M != st.vortices.total:
        raise ConfigInvalid(f"[blowup] mass: {M} differs from the vortex total {st.vortices.total}")
    if lambdas is not None:
        coeff = sec.num("mu_coeff", 1.0)
        path = [(x, mu_rule(x, coeff, sec.num("mu_power", 3.0), sec.num("mu_log", 1.0),
                            sec.num("mu_cap", math.inf))) for x in lambdas]
    else:
        path = _path(sec)
    if q is None and sec.has("q"):
        q = sec.points("q")[0]
    if q is None:
        q, m = _default_q(kind, st)
    else:
        q = tuple(float(v) % 1.0 for v in q)
        m = 0
        if kind == "vortex":
            hits = [mi for p, mi in zip(st.vortices.points, st.vortices.multiplicities)
                    if st.lattice.distance(np.array(p), np.array(q)) < 1e-9]
            if not hits:
                raise ConfigInvalid("[blowup] q: a vortex-point bubble must sit on a vortex")
            m = hits[0]
    d = sec.num("d", st.lattice.injectivity_radius / 8)
    alpha = sec.num("alpha", 0.25)
    tol = sec.num("tol", 1e-10)
    mass_radius = sec.num("mass_radius", 0.1 * math.sqrt(st.lattice.area))
    do_reduce = bool(sec.num("reduce", 1, int))
    do_polish = bool(sec.num("polish", 1, int))
    s = solve_for_beta(2.0 * M, m)
    outdir = ctx.out / name
    jobs = [(st, kind, lam, mu, q, d, s, m, alpha, tol, mass_radius, do_reduce, do_polish,
             str(outdir))
            for lam, mu in path]
    rows = ctx.map(_blowup_job, jobs)
    good = []
    for r in rows:
        label = f"blowup {kind} lam={r['lambda']:g}"
        if r.get("error"):
            ctx.fail(f"{label}: {r['error']}")
            continue
        if not r["fp_converged"]:
            ctx.fail(f"{label}: fixed point did not converge")
        if r["polish_residual"] > 1e-6:
            ctx.violate(f"{label}: assembled state residual {r['polish_residual']:.2e}")
        _check_state_row(ctx, r, label)
        good.append(r)
    mio.write_csv(outdir / "blowup.csv", BLOWUP_COLS, [[r[c] for c in BLOWUP_COLS] for r in good])
    meta = {"kind": kind, "q": list(q), "multiplicity": m, "s": s, "d": d,
            "mass_radius": mass_radius, "total": M}
    mio.atomic_write(outdir / "construction.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# diagnose

def _state_report(state, center, radius):
    row = _state_row(state)
    if center is not None:
        row["pohozaev"] = pohozaev_residual(state, center, radius)
        row["local_mass"] = local_mass(state, center, radius)
    return row


def _jsonify(x):
    if isinstance(x, dict):
        return {k: _jsonify(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonify(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def run_diagnose(ctx: Context, name: str = "diagnose", inputs=None):
    sec = ctx.section(name)
    patterns = inputs or sec.raw("inputs", "").split()
    if not patterns:
        raise ConfigInvalid("[diagnose] inputs: no state files given")
    files = []
    for pat in patterns:
        p = Path(pat)
        base = p if p.is_absolute() else ctx.out / p
        hits = sorted(base.parent.glob(base.name))
        if not hits and Path(pat).exists():
            hits = [Path(pat)]
        files.extend(hits)
    if not files:
        raise ConfigInvalid(f"[diagnose] inputs: nothing matches {patterns}")
    states = [mio.load_state(f) for f in files]
    order = sorted(range(len(states)), key=lambda i: (states[i].lam, states[i].mu))
    states = [states[i] for i in order]
    files = [files[i] for i in order]
    center = sec.points("center")
    center = center[0] if center else None
    radius = sec.num("radius", 0.1 * math.sqrt(states[0].grid.area))
    th = ClassifyThresholds(
        vanish=sec.num("vanish", 0.05), high=sec.num("high", 5.0), low=sec.num("low", -5.0),
        far_fraction=sec.num("far_fraction", 0.25), peak_fraction=sec.num("peak_fraction", 0.1),
        mass_tol=sec.num("mass_tol", 0.05))
    outdir = ctx.out / name
    rows = []
    for f, st in zip(files, states):
        try:
            check_invariants(st)
        except InvariantViolation as exc:
            ctx.violate(f"{f.name}: {exc}")
        r = _state_report(st, center, radius)
        r["file"] = f.name
        _check_state_row(ctx, r, f.name)
        mio.atomic_write(outdir / f"{f.stem}.json",
                         json.dumps(_jsonify(r), indent=2, sort_keys=True) + "\n")
        rows.append(r)
    cols = ["file"] + STATE_COLS + (["pohozaev", "local_mass"] if center is not None else [])
    lams = [s.lam for s in states]
    verdict = "n/a"
    if len(states) >= 3 and all(b > a for a, b in zip(lams, lams[1:])):
        rep = classify(states, th)
        verdict = rep.verdict
        mio.atomic_write(outdir / "classify.json",
                         json.dumps(_jsonify({"verdict": rep.verdict, "evidence": rep.evidence}),
                                    indent=2, sort_keys=True) + "\n")
        expect = sec.raw("expect")
        if expect and expect != verdict:
            ctx.violate(f"classify verdict {verdict}, expected {expect}")
    mio.write_csv(outdir / "summary.csv", cols + ["verdict"],
                  [[r.get(c, math.nan) for c in cols] + [verdict] for r in rows])


# ---------------------------------------------------------------------------
# entry point

RUNNERS = {
    "profile": run_profile, "green": run_green, "solve-cs": run_solve_cs,
    "solve-mcs": run_solve_mcs, "sweep": run_sweep, "blowup": run_blowup,
    "diagnose": run_diagnose,
}


def run(config_path, out=None, threads=None, grid=None, pipelines=None, **extra) -> int:
    """Run the pipelines named in the config (or ``pipelines``); return an exit code."""
    try:
        cp = read_config(config_path)
        rsec = Section(cp, "run")
        out = Path(out or rsec.raw("out", "mcs-out"))
        threads = threads or rsec.num("threads", 1, int)
        if threads < 1:
            raise ConfigInvalid("[run] threads: must be >= 1")
        if pipelines is None:
            pipelines = [p.strip() for p in rsec.raw("pipelines", "", required=True).replace(",", " ").split()]
        if not pipelines:
            raise ConfigInvalid("[run] pipelines: empty pipeline list")
        for p in pipelines:
            if p.split(".", 1)[0] not in RUNNERS:
                raise ConfigInvalid(f"[run] pipelines: unknown pipeline {p!r}")
        ctx = Context(cp, out, threads, grid)
        kw = {k: v for k, v in extra.items() if v is not None}
        for p in pipelines:
            log.info("pipeline %s", p)
            kind = p.split(".", 1)[0]
            if kind == "blowup":
                RUNNERS[kind](ctx, p, **{k: kw[k] for k in ("kind", "mass", "lambdas", "q") if k in kw})
            elif kind == "diagnose":
                RUNNERS[kind](ctx, p, **{k: kw[k] for k in ("inputs",) if k in kw})
            else:
                RUNNERS[kind](ctx, p)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except McsError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if ctx.failures:
        return EXIT_SOLVER
    if ctx.violations:
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcsvortex", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--threads", type=int, help="worker processes")
        p.add_argument("--grid", type=int, help="grid size n (overrides the config)")
        p.add_argument("--verbose", "-v", action="count", default=0)
        return p

    common(sub.add_parser("run", help="run every pipeline listed under [run]"))
    for name in PIPELINES:
        p = common(sub.add_parser(name, help=f"run the {name} pipeline"))
        if name == "blowup":
            p.add_argument("--kind", choices=("regular", "vortex"))
            p.add_argument("--mass", type=int, help="total vortex number M")
            p.add_argument("--lambda-grid", help="comma separated lambda values")
            p.add_argument("--q", help="bubble centre 'x,y' in lattice coordinates")
        if name == "diagnose":
            p.add_argument("inputs", nargs="*", help="state files or globs")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    extra = {}
    if args.command == "blowup":
        try:
            if args.lambda_grid:
                extra["lambdas"] = [float(x) for x in args.lambda_grid.split(",")]
            if args.q:
                extra["q"] = tuple(float(x) for x in args.q.split(","))
        except ValueError:
            print("config error: --lambda-grid/--q must be comma separated numbers", file=sys.stderr)
            return EXIT_CONFIG
        extra.update(kind=args.kind, mass=args.mass)
    if args.command == "diagnose" and args.inputs:
        extra["inputs"] = args.inputs
    pipelines = None if args.command == "run" else [args.command]
    return run(args.config, out=args.out, threads=args.threads, grid=args.grid,
               pipelines=pipelines, **extra)


if __name__ == "__main__":
    sys.exit(main())
