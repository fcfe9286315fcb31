"""Optimal block weights and their equivalence-theorem certificates.

For the A, D and T criteria the per-block score is the directional derivative
of the (normalized) criterion toward a single-block design, so a design is
optimal exactly when no block scores above one and every supporting block
scores one.  The same quantity drives a vertex-direction ascent whose weights
are sharpened by Newton steps on the current support.  E-optimal designs come
straight from the envelope game.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .design import (
    CRITERIA,
    ApproxDesign,
    DesignError,
    criterion_from_uv,
    criterion_value,
    design_moments,
    lambda_information_matrix,
    materialize,
    moments_from_vector,
)
from .envelope import EnvelopeError, solve
from .moments import DesignSpace, Quadratic, centering, incidence, moment_matrices

log = logging.getLogger(__name__)

SUPPORT_EPS = 1e-9


@dataclass
class OptimizeOptions:
    tolerance: float = 1e-8
    max_iterations: int = 100_000
    prune_threshold: float = 1e-12
    refine_every: int = 20

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations <= 0 or self.prune_threshold <= 0:
            raise ValueError("optimizer options must be positive")


@dataclass
class Certificate:
    criterion: str
    scores: dict
    max_score: float
    support_attains_max: bool
    passed: bool
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_json(self, digits: int = 12) -> dict:
        r = lambda v: float(f"{v:.{digits}g}")
        out = {
            "criterion": self.criterion,
            "max_score": r(self.max_score),
            "pass": self.passed,
            "support_attains_max": self.support_attains_max,
            "tolerance": self.tolerance,
            "scores": {k: r(v) for k, v in sorted(self.scores.items())},
        }
        if self.details:
            out["details"] = {k: (r(v) if isinstance(v, float) else v) for k, v in self.details.items()}
        return out


class NonConvergence(RuntimeError):
    def __init__(self, msg, design=None, certificate=None, iterations=0):
        super().__init__(msg)
        self.design = design
        self.certificate = certificate
        self.iterations = iterations


def _check_crit(crit: str) -> str:
    crit = crit.upper()
    if crit not in CRITERIA:
        raise DesignError(f"criterion must be one of {CRITERIA}, got {crit!r}")
    return crit


# ------------------------------------------------------------------ scores

def _uv(space: DesignSpace, w: np.ndarray, lambda0: float):
    m = moments_from_vector(space, w)
    return m, m.q_min, m.q(lambda0)


def _score_vector(space: DesignSpace, w: np.ndarray, crit: str, lambda0: float) -> np.ndarray:
    m, u, v = _uv(space, w, lambda0)
    if m.degenerate or u <= 0:
        raise DesignError("scores are undefined for a design with degenerate moments")
    M = space.moment_table
    x = m.x_d
    qx = M @ np.array([1.0, 2 * x, x * x])
    ql = M @ np.array([1.0, 2 * lambda0, lambda0**2])
    t = space.t
    k = t - 2
    if crit == "E" or k == 0:
        return qx / u
    if crit == "D":
        return qx / u / (t - 1) + k / (t - 1) * ql / v
    if crit == "A":
        pi = v / (v + k * u)
        return pi * qx / u + (1 - pi) * ql / v
    if crit == "T":
        return (qx + k * ql) / (u + k * v)
    raise DesignError(f"unknown criterion {crit!r}")


def score_block(d: ApproxDesign, block, crit: str, lambda0: float = 0.0) -> float:
    crit = _check_crit(crit)
    s = _score_vector(d.space, d.vector(), crit, lambda0)
    return float(s[d.space.index[block]])


def _certificate(space, w, crit, lambda0, tol, scores=None, mask=None) -> Certificate:
    s = _score_vector(space, w, crit, lambda0) if scores is None else scores
    if mask is None:
        mask = np.ones(len(space.blocks), bool)
    t = space.t
    sup = w > SUPPORT_EPS
    attains = bool(np.all(s[sup] >= 1 - tol))
    mx = float(s[mask].max())
    scores = {b.label(t): float(v) for b, v, keep in zip(space.blocks, s, mask) if keep}
    return Certificate(crit, scores, mx, attains, bool(mx <= 1 + tol and attains), tol)


def certify(d: ApproxDesign, crit: str, lambda0: float = 0.0, tol: float = 1e-8) -> Certificate:
    """Check the equivalence-theorem condition for ``d`` over every block."""
    crit = _check_crit(crit)
    return _certificate(d.space, d.vector(), crit, lambda0, tol)


# ------------------------------------------------- smooth objective pieces

def _objective(space, w, crit, lambda0) -> float:
    """Criterion on the scale being maximized (log scale for D)."""
    m, u, v = _uv(space, w, lambda0)
    if crit == "D":
        k = space.t - 2
        if u <= 0 or (k and v <= 0):
            return -np.inf
        return np.log(u) + (k * np.log(v) if k else 0.0)
    return criterion_from_uv(crit, u, v, space.t)


def _grad_hess(space, w, crit, lambda0):
    """Gradient and Hessian of the objective in the weights."""
    m, u, v = _uv(space, w, lambda0)
    t, k = space.t, space.t - 2
    x = m.x_d
    gu = np.array([1.0, 2 * x, x * x])
    gv = np.array([1.0, 2 * lambda0, lambda0**2])
    g0 = np.array([0.0, 1.0, x])
    Hu = -(2.0 / m.c22) * np.outer(g0, g0)
    if crit == "E" or (k == 0 and crit != "D"):
        scale = 1.0 / (t - 1) if crit != "T" else 1.0 / (t - 1) ** 2
        Fu, Fv, Fuu, Fuv, Fvv = scale, 0.0, 0.0, 0.0, 0.0
    elif crit == "T":
        Fu, Fv = 1.0 / (t - 1) ** 2, k / (t - 1) ** 2
        Fuu = Fuv = Fvv = 0.0
    elif crit == "D":
        Fu, Fv = 1.0 / u, (k / v if k else 0.0)
        Fuu, Fuv, Fvv = -1.0 / u**2, 0.0, (-k / v**2 if k else 0.0)
    else:  # A
        H = 1.0 / u + k / v
        Fu = 1.0 / (H * H * u * u)
        Fv = k / (H * H * v * v)
        Fuu = 2.0 / (H**3 * u**4) - 2.0 / (H**2 * u**3)
        Fvv = 2.0 * k * k / (H**3 * v**4) - 2.0 * k / (H**2 * v**3)
        Fuv = 2.0 * k / (H**3 * u * u * v * v)
    grad_c = Fu * gu + Fv * gv
    hess_c = (Fu * Hu + Fuu * np.outer(gu, gu) + Fuv * (np.outer(gu, gv) + np.outer(gv, gu))
              + Fvv * np.outer(gv, gv))
    M = space.moment_table
    return M @ grad_c, M @ hess_c @ M.T


def _line_search(space, w, target, crit, lambda0) -> float:
    e = np.zeros_like(w)
    e[target] = 1.0
    f = lambda a: -_objective(space, (1 - a) * w + a * e, crit, lambda0)
    res = minimize_scalar(f, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    a = float(res.x)
    # the bounded method never returns the endpoints exactly
    for edge in (0.0, 1.0):
        if f(edge) <= f(a):
            a = edge
    return a


def _newton_support(space, w, crit, lambda0, prune, iters=100):
    """Maximize the objective over the sub-simplex of the current support."""
    w = w.copy()
    for _ in range(iters):
        sup = np.flatnonzero(w > prune)
        w[w <= prune] = 0.0
        w /= w.sum()
        if len(sup) == 1:
            return w
        g, H = _grad_hess(space, w, crit, lambda0)
        g, H = g[sup], H[np.ix_(sup, sup)]
        m = len(sup)
        # the small ridge turns flat (linear) directions into long ascent
        # steps that are then clipped at the face of the simplex
        ridge = 1e-9 * max(np.abs(H).max(), np.abs(g).max(), 1e-300)
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = H - ridge * np.eye(m)
        K[:m, m] = K[m, :m] = 1.0
        rhs = np.concatenate([-g, [0.0]])
        step = np.linalg.lstsq(K, rhs, rcond=None)[0][:m]
        if not np.all(np.isfinite(step)) or np.abs(step).max() < 1e-16:
            return w
        f0 = _objective(space, w, crit, lambda0)
        ws = w[sup]
        neg = step < 0
        ratios = -ws[neg] / step[neg]
        blocking = sup[neg][np.argmin(ratios)] if ratios.size else None
        amax = ratios.min() if ratios.size else np.inf
        a = min(1.0, amax)
        while a > 1e-12:
            trial = w.copy()
            trial[sup] = np.maximum(ws + a * step, 0.0)
            if blocking is not None and a == amax:
                trial[blocking] = 0.0
            trial /= trial.sum()
            if _objective(space, trial, crit, lambda0) >= f0 - 1e-15 * abs(f0):
                break
            a *= 0.5
        else:
            return w
        done = np.abs(trial - w).max() < 1e-15
        w = trial
        if done:
            break
    return w


def _initial(space: DesignSpace, cand: np.ndarray) -> np.ndarray:
    u = np.array([b.distinct_count for b in space.blocks])
    top = u[cand].max()
    w = (cand & (u == top)).astype(float)
    w /= w.sum()
    m = moments_from_vector(space, w)
    if m.degenerate or m.q_min <= _info_floor(space):
        w = cand / cand.sum()
    return w


def _info_floor(space: DesignSpace) -> float:
    return 1e-12 * max(np.abs(space.moment_table).max(), 1.0)


def _optimize_smooth(space, crit, lambda0, opts: OptimizeOptions, cand: np.ndarray):
    w = _initial(space, cand)
    m = moments_from_vector(space, w)
    if m.degenerate or m.q_min <= _info_floor(space):
        raise DesignError("candidate blocks carry no information about the direct effects")
    tol = opts.tolerance
    for it in range(1, opts.max_iterations + 1):
        if it % opts.refine_every == 0 or it == 1:
            w = _newton_support(space, w, crit, lambda0, opts.prune_threshold)
        s = np.where(cand, _score_vector(space, w, crit, lambda0), -np.inf)
        sup = w > SUPPORT_EPS
        if s.max() <= 1 + tol and np.all(s[sup] >= 1 - tol):
            w = _newton_support(space, w, crit, lambda0, opts.prune_threshold)
            cert = _certificate(space, w, crit, lambda0, tol, mask=cand)
            if cert.passed:
                return w, cert, it
        j = int(np.argmax(s))  # first index wins ties
        a = _line_search(space, w, j, crit, lambda0)
        if a == 0.0:
            w = _newton_support(space, w, crit, lambda0, opts.prune_threshold)
            if not (w[j] > 0):
                # force the direction into the support so Newton can weigh it
                w = 0.999 * w
                w[j] += 0.001
            continue
        e = np.zeros_like(w)
        e[j] = 1.0
        w = (1 - a) * w + a * e
        if it % 50 == 0:
            w[w < opts.prune_threshold] = 0.0
            w /= w.sum()
    cert = _certificate(space, w, crit, lambda0, tol, mask=cand)
    if cert.passed:
        return w, cert, opts.max_iterations
    raise NonConvergence(
        f"{crit}-optimization did not certify within {opts.max_iterations} iterations "
        f"(max score {cert.max_score:.3g})",
        ApproxDesign.from_vector(space, w), cert, opts.max_iterations,
    )


@dataclass
class OptimizeResult:
    design: ApproxDesign
    certificate: Certificate
    value: float
    criterion: str
    lambda0: float
    iterations: int
    envelope: object = None

    @property
    def x_d(self) -> float:
        return design_moments(self.design).x_d


def e_optimal(space: DesignSpace, blocks=None):
    """E-optimal weights from the envelope game over the block quadratics."""
    cand = space.candidate_mask(blocks)
    quads = {b: Quadratic(*row) for b, row, keep in
             zip(space.blocks, space.moment_table, cand) if keep}
    sol = solve(quads)
    if sol.y_star <= 1e-12 * max(np.abs(space.moment_table).max(), 1.0):
        raise DesignError("candidate blocks carry no information about the direct effects")
    return ApproxDesign(space, sol.weights), sol


def optimize(space: DesignSpace, crit: str, lambda0: float = 0.0,
             opts: OptimizeOptions | None = None, blocks=None) -> OptimizeResult:
    """Maximize a criterion over block weights.

    ``blocks`` restricts the candidates to a sub-simplex.  With two
    treatments every criterion is a multiple of the E-criterion, so the
    envelope route is used for all of them.
    """
    opts = opts or OptimizeOptions()
    crit = _check_crit(crit)
    cand = space.candidate_mask(blocks)
    full = np.ones(len(space.blocks), bool)
    if blocks is not None:
        full = np.zeros(len(space.blocks), bool)
        full[[space.index[b] for b in blocks]] = True
    if crit == "E" or space.t == 2:
        d, sol = e_optimal(space, blocks)
        cert = _certificate(space, d.vector(), crit, lambda0, opts.tolerance, mask=full)
        if not cert.passed:
            raise NonConvergence("envelope weights failed the certificate", d, cert, 0)
        return OptimizeResult(d, cert, criterion_value(d, crit, lambda0), crit, lambda0, 0, sol)
    w, cert, it = _optimize_smooth(space, crit, lambda0, opts, cand)
    cert = _certificate(space, w, crit, lambda0, opts.tolerance, mask=full)
    d = ApproxDesign.from_vector(space, w, prune=opts.prune_threshold)
    return OptimizeResult(d, cert, criterion_value(d, crit, lambda0), crit, lambda0, it)


def efficiency(d: ApproxDesign, crit: str, lambda0: float = 0.0, reference: ApproxDesign | None = None,
               opts: OptimizeOptions | None = None) -> float:
    crit = _check_crit(crit)
    if reference is None:
        ref_value = optimize(d.space, crit, lambda0, opts).value
    else:
        ref_value = criterion_value(reference, crit, lambda0)
    return criterion_value(d, crit, lambda0) / ref_value


# ------------------------------------------------ classical universal check

def sequence_moment_matrices(space: DesignSpace, seq):
    T, F = incidence(seq, space.t)
    return moment_matrices(T, F, space.btilde), T, F


def check_universal_traditional(d: ApproxDesign, tol: float = 1e-8) -> Certificate:
    """Universal optimality under the additive carryover model.

    Scalar route: support inside the active set of the envelope and zero
    weighted slope at ``x*``.  Matrix route: the three residual matrices of
    the characterization, each measured in Frobenius norm.
    """
    space = d.space
    t = space.t
    quads = {b: Quadratic(*row) for b, row in zip(space.blocks, space.moment_table)}
    _, sol = e_optimal(space)
    x, y = sol.x_star, sol.y_star
    in_q = all(b in sol.active for b in d.weights)
    slope = sum(v * quads[b].derivative(x) for b, v in d.weights.items())
    slope_scale = max(max(abs(quads[b].derivative(x)) for b in d.weights), 1.0)
    stationary = abs(slope) <= tol * slope_scale

    cols = materialize(d)
    Bt = centering(t)
    R1 = np.zeros((t, t))
    R2 = np.zeros((t, t))
    R3 = np.zeros((space.p, t))
    for seq, w in zip(cols.sequences, cols.weights):
        C, T, F = sequence_moment_matrices(space, seq)
        R1 += w * (C[0][0] + x * C[0][1])
        R2 += w * (C[1][0] + x * C[1][1])
        R3 += w * (space.btilde @ (T + x * F) @ Bt)
    R1 -= y / (t - 1) * Bt
    bound = tol * (1 + abs(y))
    res = [float(np.linalg.norm(R)) for R in (R1, R2, R3)]
    matrix_ok = all(r <= bound for r in res)

    scores = {b.label(t): float(quads[b](x) / y) if y > 0 else 0.0 for b in space.blocks}
    cert = Certificate("Universal", scores, max(scores.values()), in_q,
                       bool(in_q and stationary and matrix_ok), tol)
    cert.details = {
        "x_star": float(x), "y_star": float(y), "support_in_active_set": in_q,
        "weighted_slope": float(slope), "scalar_pass": bool(in_q and stationary),
        "residual_11": res[0], "residual_21": res[1], "residual_incidence": res[2],
        "matrix_pass": matrix_ok,
    }
    return cert


# ------------------------------------------------ carryover-constant design

@dataclass
class LambdaDesignResult:
    design: ApproxDesign
    y0: float
    x0: float
    trace_per_subject: float
    certificate: Certificate


def optimize_lambda_design(space: DesignSpace, lambda0: float, opts: OptimizeOptions | None = None,
                           blocks=None) -> LambdaDesignResult:
    """Design maximizing the information about the proportionality constant
    for every exchangeable prior.  ``blocks`` optionally restricts the
    candidate blocks."""
    opts = opts or OptimizeOptions()
    table = space.lambda_table(lambda0)
    cand = space.blocks if blocks is None else list(blocks)
    quads = {b: Quadratic(*table[space.index[b]]) for b in cand}
    if max(max(abs(q.c0), abs(q.c1), abs(q.c2)) for q in quads.values()) <= 1e-12:
        raise DesignError("candidate blocks carry no information about the carryover constant")
    try:
        sol = solve(quads)
    except EnvelopeError as exc:
        raise NonConvergence(str(exc)) from exc
    if sol.y_star <= 1e-12:
        raise DesignError("candidate blocks carry no information about the carryover constant")
    d = ApproxDesign(space, sol.weights)
    trace = float(np.trace(lambda_information_matrix(materialize(d), lambda0)))

    w = d.vector()
    h = w @ table
    xd = -h[1] / h[2]
    rd = h[0] + 2 * h[1] * xd + h[2] * xd * xd
    sc = (table[:, 0] + 2 * table[:, 1] * xd + table[:, 2] * xd * xd) / rd
    if blocks is not None:
        keep = np.zeros(len(space.blocks), bool)
        keep[[space.index[b] for b in cand]] = True
        sc = np.where(keep, sc, -np.inf)
    cert = _certificate(space, w, "Lambda", lambda0, opts.tolerance, scores=sc)
    cert.details = {"trace_per_subject": trace, "y0": float(sol.y_star),
                    "trace_matches": bool(abs(trace - sol.y_star) <= 1e-8 * max(1.0, sol.y_star))}
    cert.scores = {k: v for k, v in cert.scores.items() if np.isfinite(v)}
    return LambdaDesignResult(d, float(sol.y_star), float(sol.x_star), trace, cert)


# ------------------------------------------------------------------- sweep

def sweep(space: DesignSpace, crit: str, grid, opts: OptimizeOptions | None = None,
          support_eps: float = 1e-7) -> list[dict]:
    rows = []
    prev = None
    for lam in grid:
        r = optimize(space, crit, float(lam), opts)
        support = tuple(b for b, v in r.design.weights.items() if v > support_eps)
        rows.append({
            "lambda0": float(lam),
            "weights": r.design.labelled(),
            "value": r.value,
            "support": [b.label(space.t) for b in support],
            "breakpoint": prev is not None and support != prev,
        })
        prev = support
    return rows
