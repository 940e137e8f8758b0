"""Toral folded singularities: detection, desingularized flow, classification.

A toral folded singularity (TFS) is a folded limit cycle where the averaged
slow drift is tangent to the fold: rho0 = a_bar . g_bar = 0.  Classification
uses the eigenvalues of the desingularized averaged flow linearized at the
singularity; the Jacobian is evaluated numerically from the assembled
canonical right-hand side (the closed-form oracle model cross-checks it).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import averaging, cycles

FOLDED_NODE = "folded-node"
FAUX_FOLDED_NODE = "faux-folded-node"
FOLDED_SADDLE = "folded-saddle"
FOLDED_SADDLE_NODE = "folded-saddle-node"
DEGENERATE_NODE = "degenerate-node"
FOLDED_FOCUS = "folded-focus"


class NotANodeError(ValueError):
    pass


class DegenerateFoldError(RuntimeError):
    pass


def smax(mu):
    """Maximal envelope-oscillation count floor((1+mu)/(2mu)); mu in (0, 1].

    The total number of maximal torus canards that persist is smax + 1.
    """
    if not (mu > 1e-6):
        raise NotANodeError(f"eigenvalue ratio mu = {mu} not in (0, 1]")
    if mu > 1.0 + 1e-12:
        raise NotANodeError(f"eigenvalue ratio mu = {mu} exceeds 1")
    return int(np.floor((1.0 + min(mu, 1.0)) / (2.0 * min(mu, 1.0))))


def desingularized_rhs(coeffs):
    """Right-hand side (R, u2) -> (F_u1 G1 + F_u2 G2, -F_R G2) on the graph chart.

    The critical-manifold graph u1 = u1S(R, u2) requires a_bar_1 != 0; when
    a_bar_1 is negligible the roles of u1 and u2 are swapped.  k = 1 systems
    reduce to the scalar field a_bar * G(R, uS(R)).
    """
    a, b, c = coeffs.a_bar, coeffs.b_bar, coeffs.c_bar
    d, e, g = coeffs.d_bar, coeffs.e_bar, coeffs.g_bar
    k = len(a)
    if k == 1:
        def rhs1(R):
            u = -(b * R * R) / (a[0] + c[0] * R)
            G = g[0] + d[0] * R + e[0, 0] * u
            return a[0] * G
        return rhs1, None

    if abs(a[0]) >= 1e-10:
        i_graph, i_chart = 0, 1
    elif abs(a[1]) >= 1e-10:
        i_graph, i_chart = 1, 0
    else:
        raise DegenerateFoldError("both components of a_bar vanish")

    def rhs(R, u_chart):
        u = np.empty(2)
        u[i_chart] = u_chart
        denom = a[i_graph] + c[i_graph] * R
        u[i_graph] = -(b * R * R + (a[i_chart] + c[i_chart] * R) * u_chart) / denom
        F_u = a + c * R
        F_R = 2.0 * b * R + c @ u
        G = g + d * R + e @ u
        return np.array([F_u @ G, -F_R * G[i_chart]])

    return rhs, (i_graph, i_chart)


def desingularized_jacobian(coeffs, step=1e-6):
    """2x2 Jacobian of the desingularized flow at the origin, by central FD."""
    rhs, chart = desingularized_rhs(coeffs)
    if chart is None:
        raise ValueError("k = 1: classification reduces to the scalar a_bar*d_bar")
    J = np.empty((2, 2))
    for j, dv in enumerate(((step, 0.0), (0.0, step))):
        fp = rhs(dv[0], dv[1])
        fm = rhs(-dv[0], -dv[1])
        J[:, j] = (fp - fm) / (2.0 * step)
    return J


@dataclass
class ToralSingularity:
    y_star: np.ndarray
    overrides: dict
    coeffs: averaging.AveragedCoefficients
    lambda1: complex
    lambda2: complex
    kind: str
    mu: float | None
    s_max: int | None
    rho0: float
    fsn2: bool
    folded_cycle: object = None
    warnings: list = field(default_factory=list)

    def as_dict(self):
        return {
            "y_star": self.y_star.tolist(),
            "params": dict(self.overrides),
            "lambda1": [self.lambda1.real, self.lambda1.imag],
            "lambda2": [self.lambda2.real, self.lambda2.imag],
            "kind": self.kind,
            "mu": self.mu,
            "s_max": self.s_max,
            "rho0": self.rho0,
            "fsn_flag": self.fsn2,
        }


def classify(coeffs, y_star=None, overrides=None, folded_cycle=None,
             fsn_tol=1e-6, zero_rel=1e-6):
    """Assign the singularity kind from the desingularized eigenvalues."""
    J = desingularized_jacobian(coeffs)
    lam = np.linalg.eigvals(J)
    scale = max(np.max(np.abs(lam)), 1e-300)
    thr = zero_rel * scale
    mu = None
    s_max = None

    if np.max(np.abs(lam.imag)) > thr:
        kind = FOLDED_FOCUS
        l1, l2 = lam[0], lam[1]
    else:
        lr = np.sort(lam.real)          # lr[0] <= lr[1]
        l1, l2 = complex(lr[0]), complex(lr[1])
        if lr[0] < -thr and lr[1] > thr:
            kind = FOLDED_SADDLE
        elif abs(lr[0]) <= thr or abs(lr[1]) <= thr:
            kind = FOLDED_SADDLE_NODE
        elif abs(lr[1] - lr[0]) <= thr:
            kind = DEGENERATE_NODE
        elif lr[1] < 0:
            kind = FOLDED_NODE
            mu = lr[1] / lr[0]           # weak / strong
            s_max = smax(mu) if mu > 1e-6 else None
        else:
            kind = FAUX_FOLDED_NODE
            mu = lr[0] / lr[1]
    fsn2 = bool(np.linalg.norm(coeffs.g_bar) <= fsn_tol)
    return ToralSingularity(
        y_star=np.asarray(y_star if y_star is not None else []),
        overrides=dict(overrides or {}), coeffs=coeffs,
        lambda1=l1, lambda2=l2, kind=kind, mu=mu, s_max=s_max,
        rho0=coeffs.rho0, fsn2=fsn2, folded_cycle=folded_cycle)


def find_toral_folded_singularities(system, fold_branch, tol=1e-9,
                                    extended=False):
    """Roots of rho0 along a branch of folded cycles (k = 2).

    ``fold_branch`` is a continuation Branch whose points carry folded-cycle
    orbits.  Sign changes of rho0 are bracketed and polished by re-solving the
    fold at pinned slow values (secant) until |rho0| <= tol.  Returns a list
    of classified ToralSingularity; touches without crossing are reported as
    FSN-I-candidate warnings on an empty or partial result.
    """
    pts = fold_branch.points
    rhos = []
    for p in pts:
        if "rho0" in p.diagnostics:
            rhos.append(p.diagnostics["rho0"])
        else:
            co = averaging.averaged_coefficients(system, p.orbit)
            rhos.append(co.rho0)
    rhos = np.asarray(rhos)
    found = []
    warnings = []
    sgn = np.sign(rhos)
    for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
        ts = _polish_rho0_root(system, pts[i], pts[i + 1], tol, extended)
        found.append(ts)
    if not found and np.min(np.abs(rhos)) < np.sqrt(tol):
        warnings.append("rho0 touches zero without crossing: candidate FSN I")
    for ts in found:
        ts.warnings = warnings
    return found


def _polish_rho0_root(system, pt_a, pt_b, tol, extended):
    ya, yb = pt_a.orbit.y, pt_b.orbit.y
    pin = int(np.argmax(np.abs(yb - ya)))
    free = 1 - pin if len(ya) == 2 else 0
    orb = pt_a.orbit.copy()

    def rho_at(pin_val):
        nonlocal orb
        guess = orb.copy()
        guess.y[pin] = pin_val
        orb = cycles.solve_folded_cycle(system, guess, free)
        co = averaging.averaged_coefficients(system, orb)
        return co.rho0, co

    a_val, b_val = float(ya[pin]), float(yb[pin])
    fa, _ = rho_at(a_val)
    fb, _ = rho_at(b_val)
    if fa * fb > 0:
        raise RuntimeError("rho0 bracket lost during polish")
    lo, flo, hi, fhi = a_val, fa, b_val, fb
    co = None
    for _ in range(80):
        mid = hi - fhi * (hi - lo) / (fhi - flo)   # secant step within bracket
        if not (min(lo, hi) < mid < max(lo, hi)):
            mid = 0.5 * (lo + hi)
        fm, co = rho_at(mid)
        if abs(fm) <= tol:
            break
        if flo * fm <= 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    else:
        raise RuntimeError(f"rho0 polish stalled at |rho0| = {abs(fm):.2e}")
    if extended:
        co = averaging.averaged_coefficients(system, orb, extended=True)
    return classify(co, y_star=orb.y.copy(), overrides=dict(orb.overrides),
                    folded_cycle=orb)


def resonance_parameters(param_values, mus, refine=None, max_order=99):
    """Parameter values where 1/mu crosses an odd integer.

    ``refine(p)`` re-evaluates mu at parameter p for secant polish; without it
    linear interpolation on the grid is returned.
    """
    param_values = np.asarray(param_values, dtype=float)
    mus = np.asarray(mus, dtype=float)
    ok = np.isfinite(mus) & (mus > 0)
    inv = np.where(ok, 1.0 / np.where(ok, mus, 1.0), np.nan)
    out = []
    for m in range(1, (max_order + 1) // 2 + 1):
        target = 2 * m + 1
        h = inv - target
        for i in range(len(h) - 1):
            if not (np.isfinite(h[i]) and np.isfinite(h[i + 1])):
                continue
            if h[i] == 0.0:
                out.append((target, float(param_values[i])))
            elif h[i] * h[i + 1] < 0:
                p_lo, p_hi = param_values[i], param_values[i + 1]
                f_lo, f_hi = h[i], h[i + 1]
                if refine is None:
                    p = p_lo - f_lo * (p_hi - p_lo) / (f_hi - f_lo)
                else:
                    p = _secant_root(lambda q: 1.0 / refine(q) - target,
                                     p_lo, p_hi, f_lo, f_hi)
                out.append((target, float(p)))
    out.sort(key=lambda t: t[1])
    return out


def _secant_root(fun, lo, hi, flo, fhi, tol=1e-10, max_iter=60):
    for _ in range(max_iter):
        mid = hi - fhi * (hi - lo) / (fhi - flo)
        if not (min(lo, hi) < mid < max(lo, hi)):
            mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if abs(hi - lo) <= tol * max(1.0, abs(mid)) or fm == 0.0:
            return mid
        if flo * fm <= 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return mid
