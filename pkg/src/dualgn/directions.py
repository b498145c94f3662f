"""Prox-linear search directions for finite-sum compositions.

For a minibatch ``S`` of size ``m`` with residual map outputs ``f_i``,
Jacobian ``J`` (stacked, accessed matrix-free) and convex per-sample losses
``l_i``, the subproblem at regularization weight ``gamma`` is

    d = argmin_d  (1/m) sum_i l_i(f_i - (J d)_i)  +  (1/(2 gamma)) ||d||^2 .

Two matrix-free routes to (approximately) the same ``d`` are provided:

* ``primal_gn_direction`` runs CG in parameter space on the normal equations
  ``(J^T H J + (m/gamma) I) d = J^T g`` where ``g`` and ``H`` are the batch
  loss gradient and (generalized) Hessian at ``f``.
* ``dual_gn_direction`` runs CG on the output-space dual: with ``mu = m/gamma``
  the dual variable ``beta`` solves ``P(H^+ + mu^{-1} J J^T)P beta = c``,
  ``c = mu^{-1} P J J^T g``, subject to ``P beta = beta``; then
  ``alpha = g - beta`` and ``d = (gamma/m) J^T alpha``.  For squared loss
  ``P = I`` and ``H^+ = I``; for the softmax/cross-entropy loss ``H^+`` is the
  diagonal ``1/sigma`` and ``P`` removes per-sample row means, with a
  ``sqrt(sigma)`` Jacobi preconditioner.

The dual CG is scheduled so that ``tau`` iterations cost exactly ``tau``
Jacobian-vector products and ``tau + 1`` transposed products, the same
leading cost as the primal route: curvature inner products are computed from
the transposed product alone (``<p, J J^T p> = ||J^T p||^2``), the forward
product that advances the residual is skipped on the final iteration, and
``J^T beta`` is accumulated from the per-iteration transposed products
instead of being recomputed at the end.  In particular ``tau = 0`` performs
no CG work and returns exactly ``gamma`` times the batch gradient.

``regularized_dual_direction`` extends the dual route to composite objectives
with an l1 or l2 penalty on the parameters via a prox step on the mapped-back
candidate; with no penalty it reproduces ``dual_gn_direction`` bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .cgsolver import BREAKDOWN_EPS, CGReport, cg_solve
from .exceptions import NumericError
from .losses import (
    SOFTMAX_FLOOR,
    constraint_project,
    loss_grad,
    loss_hvp,
    softmax,
)

__all__ = [
    "SubproblemSpec",
    "Regularizer",
    "DirectionResult",
    "soft_threshold",
    "batch_gradient",
    "primal_gn_direction",
    "dual_gn_direction",
    "regularized_dual_direction",
    "sdca_closed_form_squared",
]

PATHS = ("primal", "dual")
REG_KINDS = ("none", "l1", "l2")


@dataclass
class SubproblemSpec:
    """How to solve one minibatch subproblem.

    Parameters
    ----------
    gamma : float
        Regularization weight (prox stepsize), > 0.
    tau : int
        Inner CG iteration budget, >= 0.
    path : str
        "primal" or "dual".
    tol : float
        Relative residual tolerance for early CG exit.  The default 0.0
        always runs the full ``tau`` iterations, which keeps per-step cost
        fixed during training.
    """

    gamma: float = 1.0
    tau: int = 2
    path: str = "dual"
    tol: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.tau < 0 or int(self.tau) != self.tau:
            raise ValueError(f"tau must be a nonnegative integer, got {self.tau}")
        self.tau = int(self.tau)
        if self.path not in PATHS:
            raise ValueError(f"path must be one of {PATHS}, got {self.path!r}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")


def soft_threshold(z, t):
    """Elementwise soft-thresholding ``sign(z) * max(|z| - t, 0)``, t >= 0."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass
class Regularizer:
    """Separable penalty on the parameters: none, l1 or l2 (0.5*lam*||w||^2)."""

    kind: str = "none"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise ValueError(f"kind must be one of {REG_KINDS}, got {self.kind!r}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")

    def prox(self, z, step):
        """prox of ``step * penalty`` at ``z``."""
        if self.kind == "l1":
            return soft_threshold(z, step * self.lam)
        if self.kind == "l2":
            return np.asarray(z, dtype=np.float64) / (1.0 + step * self.lam)
        return np.asarray(z, dtype=np.float64)


@dataclass
class DirectionResult:
    """A computed direction plus its audit trail.

    ``d`` is the update direction (subtract from the parameters), ``alpha``
    the dual variable ``g - beta`` (None on the primal path), ``report`` the
    inner-solver :class:`CGReport`, and ``descent_inner_product`` the value
    ``<d, grad>`` against the batch gradient, nonnegative for the
    unregularized routes at any iteration budget.
    """

    d: np.ndarray
    alpha: object
    report: CGReport
    descent_inner_product: float


def _check_outputs(opr, loss, f):
    f = np.asarray(f, dtype=np.float64)
    _, m, k = opr.dims
    if f.shape != (m, k):
        raise ValueError(f"outputs have shape {f.shape}, expected {(m, k)}")
    if loss.y.shape != (m, k):
        raise ValueError(
            f"loss targets have shape {loss.y.shape}, expected {(m, k)}"
        )
    return f


def batch_gradient(opr, loss, f):
    """Batch gradient ``(1/m) J^T (dl/df)`` of the mean loss at ``f``."""
    f = _check_outputs(opr, loss, f)
    m = opr.dims[1]
    return opr.vjp(loss_grad(loss, f)) / m


def primal_gn_direction(opr, loss, f, spec):
    """Direction via CG on the parameter-space normal equations.

    Each CG iteration applies ``d -> J^T H (J d) + (m/gamma) d``: one forward
    product, one batched loss Hessian product and one transposed product.
    Starting from zero, every truncation is a descent direction for the batch
    objective.

    The report's ``vector_op_scalar_count`` covers all vector arithmetic
    outside the jvp/vjp/Hessian oracles, including the ridge-shift scale and
    add inside the operator, so primal and dual counters measure the same
    class of work.
    """
    f = _check_outputs(opr, loss, f)
    p, m, _ = opr.dims
    gamma = spec.gamma

    g = loss_grad(loss, f)
    u = opr.vjp(g)
    grad = u / m

    shift = m / gamma

    def apply(d):
        return opr.vjp(loss_hvp(loss, f, opr.jvp(d))) + shift * d

    d, rep = cg_solve(apply, u, max_iter=spec.tau, tol=spec.tol)
    rep.vector_op_scalar_count += 2 * p * rep.operator_calls
    return DirectionResult(
        d=d,
        alpha=None,
        report=rep,
        descent_inner_product=float(np.vdot(d, grad)),
    )


def dual_gn_direction(opr, loss, f, spec, callback=None):
    """Direction via CG on the output-space dual system.

    ``callback``, if given, receives the feasible dual iterate ``beta`` after
    each CG update.  At ``tau = 0`` the returned direction is exactly
    ``gamma`` times the batch gradient (same floating-point values).
    """
    return _dual_direction(
        opr, loss, f, spec.gamma, spec.tau, spec.tol, callback=callback
    )


def regularized_dual_direction(opr, loss, f, spec, w, reg, callback=None):
    """Dual-route direction for the composite objective with penalty ``reg``.

    The candidate parameter point is ``w - d``.  For ``reg.kind == "none"``
    this matches :func:`dual_gn_direction` exactly.  For l2 the curvature
    shift becomes ``m/gamma + m*lam``; for both penalties the mapped-back
    direction is ``d = w - prox(w - (gamma/m) J^T alpha)`` so that a full
    inner solve makes ``w - d`` a fixed point of the composite subproblem.
    """
    w = np.asarray(w, dtype=np.float64)
    p = opr.dims[0]
    if w.shape != (p,):
        raise ValueError(f"parameters have shape {w.shape}, expected {(p,)}")
    if reg.kind == "none":
        reg = None
    return _dual_direction(
        opr, loss, f, spec.gamma, spec.tau, spec.tol, w=w, reg=reg, callback=callback
    )


def _dual_direction(opr, loss, f, gamma, tau, tol, w=None, reg=None, callback=None):
    """Shared dual-route core; see module docstring for the cost schedule."""
    f = _check_outputs(opr, loss, f)
    p, m, k = opr.dims
    blk = m * k
    nops = 0

    g = loss_grad(loss, f)
    u = opr.vjp(g)
    grad = u / m
    nops += p

    mu = m / gamma
    if reg is not None and reg.kind == "l2":
        mu = m / gamma + m * reg.lam
    mu_inv = 1.0 / mu

    logistic = loss.kind == "logistic"
    if logistic:
        sig = np.maximum(softmax(f), SOFTMAX_FLOOR)
        sroot = np.sqrt(sig)
        nops += 3 * blk

    # Right-hand side in one forward product: c = P J (u/mu + shift), where
    # shift folds the prox displacement of the penalty into the same product.
    pre = mu_inv * u
    nops += p
    if reg is not None:
        pre = pre + (w - reg.prox(w, gamma))
        nops += 3 * p

    rep = CGReport()
    x = np.zeros((m, k))
    zsum = np.zeros(p)
    run_cg = tau > 0 and np.any(pre)
    if run_cg:
        c = opr.jvp(pre)
        if logistic:
            ct = sroot * constraint_project(loss, c)
            nops += 3 * blk
        else:
            ct = c
        rr = float(np.vdot(ct, ct))
        nops += blk
        rep.residual_norms.append(float(np.sqrt(rr)))
        threshold = tol * max(1.0, rep.residual_norms[0])
        r = ct.copy()
        pvec = ct.copy()
        nops += 2 * blk

        while rep.iterations < tau and rep.residual_norms[-1] > threshold:
            it = rep.iterations + 1
            if logistic:
                wblk = constraint_project(loss, sroot * pvec)
                nops += 3 * blk
            else:
                wblk = pvec
            v = opr.vjp(wblk)
            if logistic:
                hw = wblk / sig
                quad = float(np.vdot(wblk, hw))
                nops += 2 * blk
            else:
                quad = float(np.vdot(wblk, wblk))
                nops += blk
            quad += mu_inv * float(np.vdot(v, v))
            nops += p
            if not np.isfinite(quad):
                raise NumericError(
                    f"non-finite curvature product at dual CG iteration {it}"
                )
            if quad <= BREAKDOWN_EPS:
                break
            a = rr / quad
            x += a * pvec
            nops += blk
            zsum += a * v
            nops += p
            rep.iterations = it
            if callback is not None:
                if logistic:
                    callback(constraint_project(loss, sroot * x))
                else:
                    callback(x.copy())
            if it == tau:
                # Final iteration: the residual update is never consumed, so
                # the forward product that would produce it is skipped.
                break
            jb = opr.jvp(v)
            if logistic:
                qp = sroot * constraint_project(loss, hw + mu_inv * jb)
                nops += 5 * blk
            else:
                qp = wblk + mu_inv * jb
                nops += 2 * blk
            r -= a * qp
            rr_new = float(np.vdot(r, r))
            nops += 2 * blk
            if not np.isfinite(rr_new):
                raise NumericError(f"non-finite residual at dual CG iteration {it}")
            rep.residual_norms.append(float(np.sqrt(rr_new)))
            b = rr_new / rr
            rr = rr_new
            pvec = r + b * pvec
            nops += blk

        rep.inner_product_with_rhs = float(np.vdot(x, ct))
        nops += blk
        rep.operator_calls = rep.iterations

    if logistic:
        beta = constraint_project(loss, sroot * x)
        nops += 3 * blk
    else:
        beta = x
    alpha = g - beta
    nops += blk

    zpar = u - zsum
    nops += p
    if reg is None:
        d = gamma * (zpar / m)
        nops += 2 * p
    else:
        d = w - reg.prox(w - (gamma / m) * zpar, gamma)
        nops += 4 * p

    rep.vector_op_scalar_count = nops
    return DirectionResult(
        d=d,
        alpha=alpha,
        report=rep,
        descent_inner_product=float(np.vdot(d, grad)),
    )


def sdca_closed_form_squared(x, f, y, gamma):
    """Exact dual solution for a single-sample linear/squared subproblem.

    For one sample with features ``x`` (so ``J u = (U x)`` for the weight
    matrix ``U``), squared loss and regularization ``gamma``, the dual system
    is scalar per output and solves in closed form: with
    ``sigma = 1 / (gamma ||x||^2)``,

        alpha = sigma (f - y) / (1 + sigma),    d = gamma * vec(alpha x^T).

    When ``||x||^2 == 0`` the residual cannot be moved: ``alpha = f - y`` and
    ``d = 0``.

    Returns
    -------
    (alpha, d) : arrays of shape (k,) and (k * len(x),)
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = np.asarray(x, dtype=np.float64).ravel()
    f = np.asarray(f, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if f.shape != y.shape:
        raise ValueError(f"f shape {f.shape} does not match y shape {y.shape}")
    sq = float(np.vdot(x, x))
    if sq == 0.0:
        return f - y, np.zeros(f.size * x.size)
    sigma = 1.0 / (gamma * sq)
    alpha = sigma * (f - y) / (1.0 + sigma)
    d = gamma * np.outer(alpha, x).ravel()
    return alpha, d
