"""Minimizers over flat parameter vectors: L-BFGS with a strong-Wolfe line
search, and a first-order adaptive method (Adam) for the optimizer ablation.

The objective is a callable ``fun(x) -> (loss, grad)``. Both minimizers are
deterministic functions of their inputs. Accepted L-BFGS iterates never
increase the loss; when the Wolfe search fails the step falls back to
backtracking steepest descent and the event is logged.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9


@dataclass
class MinimizeResult:
    x: np.ndarray
    loss: float
    grad_norm: float
    n_iterations: int
    n_evaluations: int
    stop_reason: str  # "max_iterations" | "grad_tol" | "loss_tol" | "stalled"
    loss_history: list[float] = field(default_factory=list)
    line_search_failures: int = 0


def _cubic_minimizer(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through (a, fa, ga), (b, fb, gb); None if degenerate."""
    if a == b:
        return None
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    radicand = d1 * d1 - ga * gb
    if radicand < 0:
        return None
    d2 = math.sqrt(radicand)
    if a <= b:
        pos = b - (b - a) * ((gb + d2 - d1) / (gb - ga + 2.0 * d2 + 1e-300))
    else:
        pos = a - (a - b) * ((ga + d2 - d1) / (ga - gb + 2.0 * d2 + 1e-300))
    if not np.isfinite(pos):
        return None
    return pos


def strong_wolfe(fun, x, f0, g0, direction, alpha0=1.0, c1=WOLFE_C1, c2=WOLFE_C2,
                 max_evals=25):
    """Line search satisfying the strong Wolfe conditions.

    Returns ``(alpha, f, g, n_evals)``; ``alpha`` is None when no acceptable
    step was found within the evaluation budget.
    """
    dphi0 = float(g0 @ direction)
    if dphi0 >= 0:
        return None, f0, g0, 0

    def phi(alpha):
        f, g = fun(x + alpha * direction)
        return f, g, float(g @ direction)

    evals = 0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        nonlocal evals
        while evals < max_evals:
            alpha = _cubic_minimizer(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            span = hi_b - lo_b
            if alpha is None or not (lo_b + 0.1 * span <= alpha <= hi_b - 0.1 * span):
                alpha = 0.5 * (lo + hi)
            f, g, d = phi(alpha)
            evals += 1
            if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = alpha, f, d
            else:
                if abs(d) <= -c2 * dphi0:
                    return alpha, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = alpha, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(hi)):
                break
        return None, None, None

    alpha_prev, f_prev, d_prev = 0.0, f0, dphi0
    alpha = alpha0
    for i in range(max_evals):
        f, g, d = phi(alpha)
        evals += 1
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            a, fv, gv = zoom(alpha_prev, f_prev, d_prev, alpha, f, d)
            return (a, fv, gv, evals) if a is not None else (None, f0, g0, evals)
        if abs(d) <= -c2 * dphi0:
            return alpha, f, g, evals
        if d >= 0:
            a, fv, gv = zoom(alpha, f, d, alpha_prev, f_prev, d_prev)
            return (a, fv, gv, evals) if a is not None else (None, f0, g0, evals)
        alpha_prev, f_prev, d_prev = alpha, f, d
        alpha = 2.0 * alpha
    return None, f0, g0, evals


def _backtrack(fun, x, f0, g0, direction, c1=WOLFE_C1, max_evals=40):
    """Armijo backtracking; returns (alpha, f, g, n_evals) or alpha None."""
    dphi0 = float(g0 @ direction)
    if dphi0 >= 0:
        return None, f0, g0, 0
    alpha = 1.0 / max(1.0, float(np.abs(g0).max()))
    evals = 0
    for _ in range(max_evals):
        f, g = fun(x + alpha * direction)
        evals += 1
        if f <= f0 + c1 * alpha * dphi0:
            return alpha, f, g, evals
        alpha *= 0.5
    return None, f0, g0, evals


def minimize_lbfgs(fun, x0, max_iterations, memory=10, grad_tol=1e-6,
                   loss_tol=1e-10, callback=None):
    """Limited-memory BFGS (two-loop recursion) with strong-Wolfe steps.

    Stops at the iteration cap, when the gradient max-norm drops below
    ``grad_tol``, or when the relative loss change drops below ``loss_tol``.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun(x)
    evals = 1
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []
    history = [float(f)]
    failures = 0
    stop = "max_iterations"
    it = 0

    for it in range(1, max_iterations + 1):
        gnorm = float(np.abs(g).max())
        if gnorm < grad_tol:
            stop = "grad_tol"
            it -= 1
            break

        # two-loop recursion for the search direction
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if y_list:
            gamma = float(s_list[-1] @ y_list[-1]) / float(y_list[-1] @ y_list[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        direction = -q
        if not np.all(np.isfinite(direction)) or float(g @ direction) >= 0:
            direction = -g
            s_list.clear(); y_list.clear(); rho_list.clear()

        alpha0 = 1.0 if s_list else min(1.0, 1.0 / max(1.0, float(np.abs(g).sum())))
        alpha, f_new, g_new, n_ev = strong_wolfe(fun, x, f, g, direction, alpha0)
        evals += n_ev
        if alpha is None:
            failures += 1
            log.warning("lbfgs: Wolfe search failed at iteration %d; "
                        "falling back to backtracking steepest descent", it)
            direction = -g
            alpha, f_new, g_new, n_ev = _backtrack(fun, x, f, g, direction)
            evals += n_ev
            if alpha is None:
                stop = "stalled"
                it -= 1
                break
            s_list.clear(); y_list.clear(); rho_list.clear()

        x_new = x + alpha * direction
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0); y_list.pop(0); rho_list.pop(0)

        rel = abs(f - f_new) / max(abs(f), abs(f_new), 1.0)
        x, f, g = x_new, f_new, g_new
        history.append(float(f))
        if callback is not None:
            callback(it, x, f, g)
        if rel < loss_tol:
            stop = "loss_tol"
            break

    return MinimizeResult(
        x=x, loss=float(f), grad_norm=float(np.abs(g).max()),
        n_iterations=it, n_evaluations=evals, stop_reason=stop,
        loss_history=history, line_search_failures=failures,
    )


def minimize_adam(fun, x0, max_iterations, learning_rate=0.01, beta1=0.9,
                  beta2=0.999, eps=1e-8, grad_tol=1e-6, loss_tol=1e-10,
                  callback=None):
    """Full-batch Adam; same stopping rules as the L-BFGS path."""
    x = np.asarray(x0, dtype=np.float64).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f, g = fun(x)
    evals = 1
    history = [float(f)]
    stop = "max_iterations"
    it = 0
    for it in range(1, max_iterations + 1):
        if float(np.abs(g).max()) < grad_tol:
            stop = "grad_tol"
            it -= 1
            break
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**it)
        v_hat = v / (1.0 - beta2**it)
        x = x - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        f_new, g = fun(x)
        evals += 1
        rel = abs(f - f_new) / max(abs(f), abs(f_new), 1.0)
        f = f_new
        history.append(float(f))
        if callback is not None:
            callback(it, x, f, g)
        if rel < loss_tol:
            stop = "loss_tol"
            break
    return MinimizeResult(
        x=x, loss=float(f), grad_norm=float(np.abs(g).max()),
        n_iterations=it, n_evaluations=evals, stop_reason=stop,
        loss_history=history,
    )
