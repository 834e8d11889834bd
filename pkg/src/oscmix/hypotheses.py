"""Checks of the four structural hypotheses (D), (K), (G), (H).

(D) and (K) are linear-algebra decisions.  (G) combines the declared growth
metadata of the force with Monte Carlo sampling on spherical shells.  (H)
is decided by a breadth-first Lie-bracket closure evaluated exactly from the
derivative tensors of ``G = A x + F``, or by the perturbative search along a
ray on which the nonlinearity and its derivatives die out.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import brackets as br
from .linops import EPS_RANK, kalman_index, spectral_report
from .rng import substream

__all__ = [
    "HoermanderReport",
    "GrowthReport",
    "ExpansionReport",
    "Verdict",
    "lie_bracket_family",
    "expansion_claim_check",
    "perturbative_hoermander_search",
    "growth_check",
    "check_all",
    "shell_radii",
]

_MAX_TENSOR_ENTRIES = 4_000_000


@dataclass
class HoermanderReport:
    x0: np.ndarray
    max_depth: int
    bracket_vectors: np.ndarray
    labels: list
    singular_values: np.ndarray
    rank: int
    satisfied: bool
    outcome: str  # satisfied | not found | inconclusive | witness | search failed
    depth_reached: int = 0
    eps_rank: float = EPS_RANK
    note: str = ""
    witness: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)
    tau: float | None = None


@dataclass
class GrowthReport:
    sampled_sup: float
    shells: np.ndarray
    a: float
    passed: bool
    shell_max: np.ndarray = None
    trend_slope: float = 0.0
    inconclusive: bool = False
    note: str = ""


@dataclass
class ExpansionReport:
    k: int
    column: int
    bracket: np.ndarray
    leading: np.ndarray
    corrections: list  # (coefficient, term, occupation)
    residual: float  # |bracket - leading - sum of enumerated corrections|
    displayed_residual: float | None  # against the hand-written k <= 3 formulas
    structure_ok: bool
    scale: float


@dataclass
class Verdict:
    D: dict
    K: dict
    G: dict
    H: dict

    @property
    def all_hold(self):
        return all(part["status"] == "pass" for part in (self.D, self.K, self.G, self.H))

    def failed(self):
        return [name for name, part in zip("DKGH", (self.D, self.K, self.G, self.H))
                if part["status"] != "pass"]

    def as_lines(self):
        lines = []
        for name, part in zip("DKGH", (self.D, self.K, self.G, self.H)):
            extra = " ".join(f"{k}={v}" for k, v in part.items() if k != "status")
            lines.append(f"{name}={part['status']} {extra}".rstrip())
        return lines


# ---------------------------------------------------------------- brackets

class _Derivs:
    """Lazily grown list of ``D^j G(x0)`` tensors."""

    def __init__(self, spec, x0):
        self.spec = spec
        self.x0 = np.asarray(x0, dtype=float)
        self.linear = spec.force.is_zero
        self.order = -1
        self.tensors = []

    def available(self, j):
        if self.linear:
            return True
        if j > self.spec.force.max_order:
            return False
        return self.spec.d ** (j + 1) <= _MAX_TENSOR_ENTRIES

    def ensure(self, j):
        if j <= self.order:
            return
        if self.linear:
            d = self.spec.d
            ts = [self.spec.A @ self.x0, self.spec.A]
            ts += [np.zeros((d,) * (i + 1)) for i in range(2, j + 1)]
            self.tensors = ts[: j + 1] if j >= 1 else ts[:1]
        else:
            self.tensors = self.spec.G_derivatives(self.x0, j)
        self.order = j


def _drop_vanishing(c):
    # for affine G every D^j G with j >= 2 is zero
    return {t: v for t, v in c.items() if br.max_order({t: 1}) <= 1}


def _canonical(c):
    items = sorted(c.items())
    if items and items[0][1] < 0:
        items = [(t, -v) for t, v in items]
    return tuple(items)


def _rank_info(V, eps_rank):
    if V.size == 0:
        return np.zeros(0), 0
    s = np.linalg.svd(V, compute_uv=False)
    if s[0] == 0:
        return s, 0
    return s, int(np.sum(s > eps_rank * s[0]))


def lie_bracket_family(spec, x0, max_depth=None, eps_rank=EPS_RANK):
    """Breadth-first closure of the bracket family spanning (H) at ``x0``.

    Depth 0 holds the columns of B; depth l holds ``L_V W`` with ``V`` in
    ``{Be_i} + {A+F}`` and ``W`` from depth l-1 (depth -1 being that same
    alphabet).  Fields equal up to sign are kept once.
    """
    d, n = spec.d, spec.n
    x0 = np.asarray(x0, dtype=float)
    if max_depth is None:
        max_depth = 2 * d
    derivs = _Derivs(spec, x0)
    alphabet = [({br.b(i): 1}, f"Be{i + 1}") for i in range(n)
                if np.any(spec.B[:, i] != 0)]
    empty = HoermanderReport(x0, max_depth, np.zeros((0, d)), [], np.zeros(0), 0,
                             False, "not found", 0, eps_rank, "no nonzero noise direction")
    if not alphabet:
        return empty
    alphabet.append(({br.G: 1}, "A+F"))

    seen = set()
    vectors, labels = [], []
    frontier = []
    for c, lab in alphabet[:-1]:
        seen.add(_canonical(c))
        frontier.append((c, lab))
    level_fields = list(frontier)
    previous = list(alphabet)

    def evaluate(fields):
        order = max(br.max_order(c) for c, _ in fields)
        derivs.ensure(max(order, 1))
        ev = br.Evaluator(derivs.tensors, spec.B)
        return [ev(c) for c, _ in fields]

    depth = 0
    outcome, note = "not found", ""
    s, rank = np.zeros(0), 0
    while True:
        if level_fields:
            vectors.extend(evaluate(level_fields))
            labels.extend(lab for _, lab in level_fields)
            s, rank = _rank_info(np.array(vectors), eps_rank)
        if rank == d:
            thr = eps_rank * s[0]
            if s[d - 1] >= 10 * thr:
                outcome = "satisfied"
                break
        if depth >= max_depth:
            break
        nxt = []
        for W, wlab in previous:
            for V, vlab in alphabet:
                c = br.lie(V, W)
                if derivs.linear:
                    c = _drop_vanishing(c)
                if not c:
                    continue
                key = _canonical(c)
                if key in seen:
                    continue
                seen.add(key)
                nxt.append((c, f"[{vlab},{wlab}]"))
        if not nxt:
            note = f"bracket family closed at depth {depth}"
            break
        need = max(br.max_order(c) for c, _ in nxt)
        if not derivs.available(need):
            outcome = f"inconclusive at depth {depth + 1}"
            note = f"derivatives of order {need} not available"
            break
        depth += 1
        level_fields = nxt
        previous = nxt

    if outcome != "satisfied" and rank == d:
        outcome = "inconclusive"
        note = "d-th singular value within a factor 10 of the rank threshold"
    V = np.array(vectors) if vectors else np.zeros((0, d))
    return HoermanderReport(x0, max_depth, V, labels, s, rank, outcome == "satisfied",
                            outcome, depth, eps_rank, note or f"depth cap {max_depth}")


# ------------------------------------------------------- expansion claim

def _displayed(Gd, bvec, k):
    """The hand-written low-order formulas for ``L_G^k b``."""
    Gx, DG = Gd[0], Gd[1]
    if k == 0:
        return bvec
    if k == 1:
        return -DG @ bvec
    D2 = Gd[2]
    if k == 2:
        return DG @ DG @ bvec - D2 @ Gx @ bvec
    D3 = Gd[3]
    D2bG = D2 @ Gx @ bvec  # D^2G[b, G] (symmetric)
    return (-DG @ DG @ DG @ bvec + 2 * DG @ D2bG + D2 @ Gx @ (DG @ bvec)
            - D3 @ Gx @ Gx @ bvec - D2 @ (DG @ Gx) @ bvec)


def expansion_claim_check(spec, column, k, x):
    """Compare ``L_G^k b`` with ``(-1)^k DG^k b`` plus its correction terms."""
    if k > 4:
        raise NotImplementedError("expansion check supports k <= 4")
    if k < 0:
        raise ValueError("k must be non-negative")
    x = np.asarray(x, dtype=float)
    combo = br.power_lie({br.G: 1}, {br.b(column): 1}, k)
    Gd = spec.G_derivatives(x, max(k, 1))
    ev = br.Evaluator(Gd, spec.B)
    bracket = ev(combo)
    bvec = spec.B[:, column]
    lead = bvec.copy()
    for _ in range(k):
        lead = Gd[1] @ lead
    lead = (-1) ** k * lead
    lead_combo = br.leading_term(k, column)
    corr = br.combo_add(combo, br.combo_scale(lead_combo, -1))
    corrections = []
    ok = True
    for t, c in sorted(corr.items()):
        occ = br.occupation(t)
        Ns = {j: v for j, v in occ.items() if j != "b"}
        if occ["b"] != 1 or sum(Ns.values()) != k or sum(j * v for j, v in Ns.items()) != k:
            ok = False
        if Ns.get(1, 0) == k:
            ok = False
        corrections.append((c, t, dict(occ)))
    corr_val = ev(corr) if corr else np.zeros(spec.d)
    scale = max(1.0, float(np.linalg.norm(bracket)), float(np.linalg.norm(lead)))
    residual = float(np.linalg.norm(bracket - lead - corr_val))
    disp = None
    if k <= 3:
        disp = float(np.linalg.norm(bracket - _displayed(Gd, bvec, k)))
    return ExpansionReport(k, column, bracket, lead, corrections, residual, disp, ok, scale)


# --------------------------------------------------- perturbative search

def perturbative_hoermander_search(spec, ray, n_grid=None, tau=None, eps_rank=EPS_RANK):
    """Look for a point ``y = s * ray`` where the nonlinearity is negligible
    and ``{b, DG b, ..., DG^{d*-1} b}`` already spans.

    ``tau`` bounds each decay diagnostic ``|y|^{k-1} ||D^k F(y)||``
    (Frobenius) for k = 1..d*-1; default ``1e-3 * ||A||``.
    """
    d = spec.d
    ray = np.asarray(ray, dtype=float)
    if ray.shape != (d,):
        raise ValueError(f"ray must have length {d}")
    if n_grid is None:
        n_grid = np.unique(np.round(np.logspace(0, 4, 41)))
    kal = kalman_index(spec.A, spec.B, eps_rank)
    if tau is None:
        tau = 1e-3 * float(np.linalg.norm(spec.A, 2))
    failed = HoermanderReport(np.zeros(d), 0, np.zeros((0, d)), [], np.zeros(0), 0, False,
                              "search failed on this ray", 0, eps_rank, "", None, [], tau)
    if not kal.satisfied:
        failed.note = "(K) fails; the search needs d_star"
        return failed
    ds = kal.d_star
    kmax = max(ds - 1, 1)
    if not spec.force.is_zero and spec.force.max_order < kmax:
        raise ValueError(f"force derivatives needed up to order {kmax}")
    diag_log = []
    for s in n_grid:
        y = float(s) * ray
        Fd = spec.force.derivatives(y, kmax)
        ny = float(np.linalg.norm(y))
        diag = [ny ** (k - 1) * float(np.linalg.norm(Fd[k])) for k in range(1, ds)]
        diag_log.append((float(s), diag))
        if any(v > tau for v in diag):
            continue
        DG = spec.A + Fd[1]
        vecs, labels = [], []
        for i in range(spec.n):
            v = spec.B[:, i]
            for j in range(ds):
                vecs.append(v)
                labels.append(f"DG^{j} Be{i + 1}")
                v = DG @ v
        V = np.array(vecs)
        sv, rank = _rank_info(V, eps_rank)
        if rank == d:
            return HoermanderReport(y, ds - 1, V, labels, sv, rank, True, "witness", ds - 1,
                                    eps_rank, f"witness at scale {s:g}", y, diag_log, tau)
    failed.diagnostics = diag_log
    failed.note = "no grid point with decayed diagnostics and full Krylov rank"
    return failed


# ------------------------------------------------------------ growth

def shell_radii(r_min=1.0, decades=6, per_decade=2):
    return np.logspace(np.log10(r_min), np.log10(r_min) + decades, decades * per_decade + 1)


def _shell_max(force, a, radius, samples, seed, index):
    rng = substream(seed, index)
    u = rng.standard_normal((samples, force.dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = radius * u
    vals = np.linalg.norm(force.value(X), axis=1) / (1.0 + radius) ** a
    return float(np.max(vals))


def growth_check(spec, shells=None, samples_per_shell=256, seed=0, d_star=None, workers=1):
    """Sampled ``sup |F(x)| / (1 + |x|)^a`` shell by shell, with a trend test
    over the two largest decades of radius."""
    shells = shell_radii() if shells is None else np.asarray(shells, dtype=float)
    if np.any(np.diff(shells) <= 0):
        raise ValueError("shells must be increasing")
    if np.log10(shells[-1] / shells[0]) < 4 - 1e-12:
        raise ValueError("shells must span at least four decades")
    force = spec.force
    a = float(force.growth_exponent)
    if force.is_zero:
        maxes = np.zeros(shells.size)
    else:
        jobs = [(force, a, r, samples_per_shell, seed, i) for i, r in enumerate(shells)]
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                maxes = np.array(list(ex.map(lambda j: _shell_max(*j), jobs)))
        else:
            maxes = np.array([_shell_max(*j) for j in jobs])
    sup = float(np.max(maxes))
    window = shells >= shells[-1] / 100.0
    pos = window & (maxes > 0)
    slope = 0.0
    if np.count_nonzero(pos) >= 2:
        slope = float(np.polyfit(np.log(shells[pos]), np.log(maxes[pos]), 1)[0])
    passed = bool(np.isfinite(sup) and slope <= 0.05)
    inconclusive, note = False, ""
    if d_star is not None and a >= 0.9 / (2 * d_star):
        inconclusive = True
        note = f"a={a:g} within 10% of 1/(2 d_star)={1 / (2 * d_star):g}"
    return GrowthReport(sup, shells, a, passed, maxes, slope, inconclusive, note)


# ------------------------------------------------------------ combined

def check_all(spec, x0_candidates=(), ray=None, n_grid=None, max_depth=None,
              growth_kwargs=None, eps_rank=EPS_RANK):
    sp = spectral_report(spec.A)
    D = {"status": "pass" if sp.is_hurwitz else "fail", "max_real_part": f"{sp.max_real_part:.6g}"}
    kal = kalman_index(spec.A, spec.B, eps_rank)
    K = {"status": "pass" if kal.satisfied else "fail", "d_star": kal.d_star}

    ds = kal.d_star if kal.satisfied else spec.d
    gr = growth_check(spec, d_star=ds, **(growth_kwargs or {}))
    a = gr.a
    declared = a < 1.0 / (2 * ds) and math.isfinite(spec.force.growth_constant)
    if gr.inconclusive and declared and gr.passed:
        gstat = "inconclusive"
    else:
        gstat = "pass" if (declared and gr.passed) else "fail"
    G = {"status": gstat, "a": a, "bound": f"{1.0 / (2 * ds):.6g}",
         "sampled_sup": f"{gr.sampled_sup:.6g}", "trend_slope": f"{gr.trend_slope:.3g}"}
    if gr.note:
        G["note"] = gr.note

    H = {"status": "fail", "witness": None, "how": "not found"}
    reports = []
    for x0 in x0_candidates:
        rep = lie_bracket_family(spec, x0, max_depth, eps_rank)
        reports.append(rep)
        if rep.satisfied:
            H = {"status": "pass", "witness": _fmt_point(rep.x0), "how": "brackets",
                 "depth": rep.depth_reached}
            break
    if H["status"] != "pass" and ray is not None and spec.B.any():
        rep = perturbative_hoermander_search(spec, ray, n_grid, eps_rank=eps_rank)
        reports.append(rep)
        if rep.satisfied:
            H = {"status": "pass", "witness": _fmt_point(rep.witness), "how": "ray search"}
    if H["status"] != "pass" and any(r.outcome.startswith("inconclusive") for r in reports):
        H["status"] = "inconclusive"
        H["how"] = "derivatives or rank margin exhausted"
    return Verdict(D, K, G, H)


def _fmt_point(x):
    return "(" + ";".join(f"{v:.6g}" for v in np.asarray(x)) + ")"
