"""Conjugate gradient on matrix-free operators, plus an equality-constrained
variant that runs CG through an orthogonal projector.

The solver reports enough bookkeeping to audit cost and descent claims:
residual norms per iteration, the inner product of the solution with the
right-hand side (nonnegative for CG started at zero on a PSD system, which is
what makes truncated solutions usable as descent directions), a running count
of scalar operations spent on vector arithmetic, and the number of operator
applications.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError

__all__ = ["CGReport", "cg_solve", "projected_cg_solve"]

# A curvature inner product at or below this is treated as breakdown: the
# solver stops and returns the last iterate (every prefix is still usable).
BREAKDOWN_EPS = 1e-300


@dataclass
class CGReport:
    """What a CG run did.

    Attributes
    ----------
    iterations : int
        Completed iterations.
    residual_norms : list of float
        ``residual_norms[0]`` is the initial residual norm ``||c - Q x0||``;
        one entry is appended per completed iteration.
    inner_product_with_rhs : float
        ``<x, c>`` at exit.  With ``x0 = 0`` on a PSD system this is
        nonnegative up to round-off for every iteration count.
    vector_op_scalar_count : int
        Scalar operations spent on dots/axpys inside the solver loop
        (operator applications are not included).
    operator_calls : int
        Number of times the operator was applied.
    """

    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    inner_product_with_rhs: float = 0.0
    vector_op_scalar_count: int = 0
    operator_calls: int = 0


def cg_solve(q_apply, c, x0=None, max_iter=None, tol=1e-10, callback=None):
    """Solve ``Q x = c`` for symmetric PSD ``Q`` given as a callable.

    Standard recurrences from ``x^0``: with ``r^0 = p^0 = c - Q x^0``,

        a_t = <r_{t-1}, r_{t-1}> / <p_{t-1}, Q p_{t-1}>
        x_t = x_{t-1} + a_t p_{t-1}
        r_t = r_{t-1} - a_t Q p_{t-1}
        b_t = <r_t, r_t> / <r_{t-1}, r_{t-1}>
        p_t = r_t + b_t p_{t-1}

    Stops after ``max_iter`` iterations (default: the problem size) or when
    ``||r|| <= tol * max(1, ||c||)``.  On curvature breakdown
    (``<p, Qp> <= BREAKDOWN_EPS``) the current iterate is returned.  A
    non-finite intermediate raises :class:`NumericError` naming the iteration.

    ``c`` may have any array shape; the operator must map that shape to
    itself.  ``callback(x)`` is invoked after each iterate update.

    Returns
    -------
    (x, CGReport)
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    if max_iter is None:
        max_iter = n
    if max_iter < 0:
        raise ValueError(f"max_iter must be >= 0, got {max_iter}")
    rep = CGReport()

    if x0 is None:
        x = np.zeros_like(c)
        r = c.copy()
        rep.vector_op_scalar_count += n
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
        if x.shape != c.shape:
            raise ValueError(f"x0 shape {x.shape} does not match rhs shape {c.shape}")
        if np.any(x):
            r = c - q_apply(x)
            rep.operator_calls += 1
            rep.vector_op_scalar_count += 2 * n
        else:
            r = c.copy()
            rep.vector_op_scalar_count += n

    p = r.copy()
    rr = float(np.vdot(r, r))
    rep.vector_op_scalar_count += 2 * n
    rep.residual_norms.append(float(np.sqrt(rr)))
    threshold = tol * max(1.0, float(np.linalg.norm(c)))
    rep.vector_op_scalar_count += n

    while rep.iterations < max_iter and rep.residual_norms[-1] > threshold:
        it = rep.iterations + 1
        qp = q_apply(p)
        rep.operator_calls += 1
        paqp = float(np.vdot(p, qp))
        rep.vector_op_scalar_count += n
        if not np.isfinite(paqp):
            raise NumericError(f"non-finite curvature product at CG iteration {it}")
        if paqp <= BREAKDOWN_EPS:
            break
        a = rr / paqp
        x += a * p
        r -= a * qp
        rr_new = float(np.vdot(r, r))
        rep.vector_op_scalar_count += 3 * n
        if not np.isfinite(rr_new):
            raise NumericError(f"non-finite residual at CG iteration {it}")
        rep.iterations = it
        rep.residual_norms.append(float(np.sqrt(rr_new)))
        if callback is not None:
            callback(x)
        b = rr_new / rr
        rr = rr_new
        p = r + b * p
        rep.vector_op_scalar_count += n

    rep.inner_product_with_rhs = float(np.vdot(x, c))
    rep.vector_op_scalar_count += n
    return x, rep


def projected_cg_solve(
    q_apply, c, p_apply, max_iter=None, tol=1e-10, diag_precond=None, callback=None
):
    """Minimize ``0.5 <x, Qx> - <x, c>`` over the subspace ``{x : P x = x}``.

    ``p_apply`` must be an orthogonal projector; idempotence is probed on the
    right-hand side and a ValueError is raised if ``P(Pc)`` differs from
    ``Pc`` by more than 1e-8 (relative to ``max(1, ||Pc||)``).

    The solve runs plain CG on the projected operator ``x -> P Q P x`` with
    right-hand side ``P c``, started at zero, so every iterate (and hence the
    returned solution) lies in the constraint subspace.  With a positive
    ``diag_precond`` vector ``s`` the system is solved in the scaled
    variables ``x = P(s * z)`` using the operator ``z -> s * (P Q P)(s * z)``
    and right-hand side ``s * P c``; the projector is re-applied on the way
    back so feasibility survives the scaling.  The report's
    ``inner_product_with_rhs`` equals ``<x, c>`` in either parametrization.

    ``callback`` receives original-space iterates.

    Returns
    -------
    (x, CGReport)
    """
    c = np.asarray(c, dtype=np.float64)
    pc = p_apply(c)
    ppc = p_apply(pc)
    gap = float(np.linalg.norm(ppc - pc))
    if gap > 1e-8 * max(1.0, float(np.linalg.norm(pc))):
        raise ValueError(
            f"projector failed the idempotence probe: ||P(Pc) - Pc|| = {gap:.3e}"
        )

    if diag_precond is None:
        op = lambda x: p_apply(q_apply(p_apply(x)))
        return cg_solve(op, pc, max_iter=max_iter, tol=tol, callback=callback)

    s = np.asarray(diag_precond, dtype=np.float64)
    if s.shape != c.shape:
        raise ValueError(
            f"diag_precond shape {s.shape} does not match rhs shape {c.shape}"
        )
    if np.any(s <= 0):
        raise ValueError("diag_precond entries must be strictly positive")

    op = lambda z: s * p_apply(q_apply(p_apply(s * z)))
    cb = None if callback is None else (lambda z: callback(p_apply(s * z)))
    z, rep = cg_solve(op, s * pc, max_iter=max_iter, tol=tol, callback=cb)
    return p_apply(s * z), rep
