"""Minibatch training loops built on the prox-linear direction routines.

A training method is a pairing of a direction source with an outer update
rule:

* direction source "proxlinear": the minibatch subproblem direction at
  regularization ``gamma`` (primal or dual route, optional l1/l2 penalty on
  the dual route);
* direction source "gradient": the plain batch gradient.

Update rules: ``spl`` takes the full step ``w - d`` (for the gradient source
it uses ``w - gamma * d``, matching the zero-inner-iteration prox-linear
step); ``armijo_spl`` computes the direction at ``gamma = 1`` and backtracks
a stepsize; ``sgd``, ``momentum`` and ``adam`` feed the direction into the
usual first-order update rules with stepsize ``eta``.

All randomness (parameter init, epoch shuffling) is driven by counter-based
Philox streams keyed on the seed, so runs are bit-reproducible; epoch
shuffles draw a full permutation and the final short batch is kept.  A
non-finite batch loss aborts the run with a diagnostic record instead of
raising.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .cgsolver import CGReport
from .data import Dataset
from .directions import (
    DirectionResult,
    Regularizer,
    SubproblemSpec,
    dual_gn_direction,
    primal_gn_direction,
    regularized_dual_direction,
)
from .linop import make_jacobian_operator
from .losses import LOSS_KINDS, LossOracle, loss_grad, loss_value
from .models import make_model

__all__ = [
    "TrainConfig",
    "OptimizerState",
    "RunRecord",
    "TrainResult",
    "armijo_search",
    "outer_update",
    "spl_step",
    "armijo_spl_step",
    "train",
]

METHODS = ("spl", "armijo_spl", "sgd", "momentum", "adam")
DIRECTIONS = ("gradient", "proxlinear")


@dataclass
class TrainConfig:
    """Everything that determines a training run (except the data)."""

    method: str = "spl"
    direction: str = "proxlinear"
    path: str = "dual"
    loss: str = "squared"
    model: str = "linear"
    gamma: float = 1.0
    eta: float = 0.1
    tau: int = 2
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    l1: float = 0.0
    l2: float = 0.0
    momentum_mu: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    armijo_beta: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_max_backtracks: int = 30

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(
                f"direction must be one of {DIRECTIONS}, got {self.direction!r}"
            )
        if self.path not in ("primal", "dual"):
            raise ValueError(f"path must be 'primal' or 'dual', got {self.path!r}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.tau < 0 or int(self.tau) != self.tau:
            raise ValueError(f"tau must be a nonnegative integer, got {self.tau}")
        if self.batch_size < 1 or int(self.batch_size) != self.batch_size:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size}")
        if self.epochs < 0 or int(self.epochs) != self.epochs:
            raise ValueError(f"epochs must be a nonnegative integer, got {self.epochs}")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("l1 and l2 must be nonnegative")
        if self.l1 > 0 and self.l2 > 0:
            raise ValueError("l1 and l2 penalties cannot be combined")
        if not 0 < self.armijo_beta < 1:
            raise ValueError(f"armijo_beta must lie in (0, 1), got {self.armijo_beta}")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError(
                f"armijo_shrink must lie in (0, 1), got {self.armijo_shrink}"
            )
        self.tau = int(self.tau)
        self.batch_size = int(self.batch_size)
        self.epochs = int(self.epochs)
        if (self.l1 > 0 or self.l2 > 0) and (
            self.direction != "proxlinear"
            or self.path != "dual"
            or self.method == "armijo_spl"
        ):
            raise ValueError(
                "l1/l2 penalties require direction='proxlinear', path='dual' "
                "and a fixed-gamma method"
            )

    def regularizer(self):
        if self.l1 > 0:
            return Regularizer("l1", self.l1)
        if self.l2 > 0:
            return Regularizer("l2", self.l2)
        return None


@dataclass
class OptimizerState:
    """Mutable state for the stateful outer update rules."""

    velocity: object = None
    adam_m: object = None
    adam_v: object = None
    t: int = 0


@dataclass
class RunRecord:
    """One logged training step (field order matches the CSV schema)."""

    step: int
    epoch: int
    wall_ms: float
    batch_loss: float
    train_loss: float
    train_acc: float
    eta: float
    gamma: float
    inner_iters: int
    jvp_calls: int
    vjp_calls: int
    descent_ip: float


@dataclass
class TrainResult:
    records: list
    aborted: bool = False
    abort_reason: str = None
    params: object = None
    model: object = None


def armijo_search(
    batch_loss_eval, w, d, g, beta=1e-4, shrink=0.5, eta0=1.0, max_backtracks=30
):
    """Backtracking linesearch along ``-d`` for the batch objective.

    Tries ``eta = eta0 * shrink**j`` for ``j = 0, 1, ...`` and returns the
    first (largest) stepsize with

        h(w - eta d) <= h(w) - beta * eta * <d, g>,

    where ``g`` is the batch gradient at ``w``.  Returns ``(eta, accepted)``;
    after ``max_backtracks`` rejections the smallest stepsize tried is
    returned with ``accepted=False``.  Raises ValueError if ``d`` is not a
    descent direction (``<d, g>`` significantly negative).
    """
    d = np.asarray(d, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    dg = float(np.vdot(d, g))
    if dg < -1e-10 * (1.0 + float(np.linalg.norm(d)) * float(np.linalg.norm(g))):
        raise ValueError(f"not a descent direction: <d, grad> = {dg:.3e}")
    return _armijo_backtrack(
        batch_loss_eval, w, d, max(dg, 0.0), beta, shrink, eta0, max_backtracks
    )


def _armijo_backtrack(batch_loss_eval, w, d, dg, beta, shrink, eta0, max_backtracks):
    h0 = float(batch_loss_eval(w))
    eta = eta0
    for _ in range(max_backtracks + 1):
        if float(batch_loss_eval(w - eta * d)) <= h0 - beta * eta * dg:
            return eta, True
        eta *= shrink
    return eta / shrink, False


def outer_update(rule, state, w, d, eta, config):
    """Apply one sgd/momentum/adam update with direction ``d``; returns new w.

    ``state`` is mutated in place.  Momentum uses the heavy-ball recursion
    ``v <- mu v + d``; adam uses bias-corrected first and second moments.
    """
    if rule == "sgd":
        return w - eta * d
    if rule == "momentum":
        if state.velocity is None:
            state.velocity = np.zeros_like(w)
        state.velocity = config.momentum_mu * state.velocity + d
        return w - eta * state.velocity
    if rule == "adam":
        if state.adam_m is None:
            state.adam_m = np.zeros_like(w)
            state.adam_v = np.zeros_like(w)
        b1, b2 = config.adam_beta1, config.adam_beta2
        state.t += 1
        state.adam_m = b1 * state.adam_m + (1.0 - b1) * d
        state.adam_v = b2 * state.adam_v + (1.0 - b2) * d * d
        mhat = state.adam_m / (1.0 - b1 ** state.t)
        vhat = state.adam_v / (1.0 - b2 ** state.t)
        return w - eta * mhat / (np.sqrt(vhat) + config.adam_eps)
    raise ValueError(f"unknown update rule {rule!r}")


@dataclass
class _StepInfo:
    batch_loss: float
    eta: float
    gamma: float
    inner_iters: int
    descent_ip: float
    jvp_calls: int
    vjp_calls: int
    finite: bool = True


def _batch_step(model, w, Xb, Yb, config, state):
    """One minibatch update; returns (w_new, _StepInfo)."""
    m = Xb.shape[0]
    oracle = LossOracle(config.loss, Yb)
    opr = make_jacobian_operator(model, w, Xb)
    f = model.forward(w, Xb)
    batch_loss = float(np.mean(loss_value(oracle, f)))
    gamma_eff = 1.0 if config.method == "armijo_spl" else config.gamma
    if not np.isfinite(batch_loss):
        return w, _StepInfo(batch_loss, 0.0, gamma_eff, 0, 0.0, 0, 0, finite=False)

    if config.direction == "gradient":
        grad = opr.vjp(loss_grad(oracle, f)) / m
        res = DirectionResult(
            d=grad,
            alpha=None,
            report=CGReport(),
            descent_inner_product=float(np.vdot(grad, grad)),
        )
    else:
        spec = SubproblemSpec(gamma=gamma_eff, tau=config.tau, path=config.path)
        reg = config.regularizer()
        if config.path == "primal":
            res = primal_gn_direction(opr, oracle, f, spec)
        elif reg is not None:
            res = regularized_dual_direction(opr, oracle, f, spec, w, reg)
        else:
            res = dual_gn_direction(opr, oracle, f, spec)

    d = res.d
    if config.method == "spl":
        if config.direction == "gradient":
            d = gamma_eff * d
        w_new = w - d
        eta_used = 1.0
    elif config.method == "armijo_spl":
        h_eval = lambda v: float(np.mean(loss_value(oracle, model.forward(v, Xb))))
        eta_used, _ = _armijo_backtrack(
            h_eval,
            w,
            d,
            max(res.descent_inner_product, 0.0),
            config.armijo_beta,
            config.armijo_shrink,
            1.0,
            config.armijo_max_backtracks,
        )
        w_new = w - eta_used * d
    else:
        w_new = outer_update(config.method, state, w, d, config.eta, config)
        eta_used = config.eta

    info = _StepInfo(
        batch_loss,
        eta_used,
        gamma_eff,
        res.report.iterations,
        res.descent_inner_product,
        opr.jvp_calls,
        opr.vjp_calls,
    )
    return w_new, info


def _batch_model(config, batch, model):
    Xb, Yb = (np.asarray(b, dtype=np.float64) for b in batch)
    if model is None:
        model = make_model(config.model, Xb.shape[1], Yb.shape[1])
    return model, Xb, Yb


def spl_step(w, batch, config, model=None):
    """One full prox-linear step ``w - d`` on the batch ``(X, Y)``."""
    if config.method != "spl":
        raise ValueError(f"spl_step requires method='spl', got {config.method!r}")
    model, Xb, Yb = _batch_model(config, batch, model)
    w_new, _ = _batch_step(model, w, Xb, Yb, config, OptimizerState())
    return w_new


def armijo_spl_step(w, batch, config, model=None):
    """One backtracked prox-linear step at gamma=1; returns (w_new, eta)."""
    if config.method != "armijo_spl":
        raise ValueError(
            f"armijo_spl_step requires method='armijo_spl', got {config.method!r}"
        )
    model, Xb, Yb = _batch_model(config, batch, model)
    w_new, info = _batch_step(model, w, Xb, Yb, config, OptimizerState())
    return w_new, info.eta


def _full_metrics(model, w, X, Y, loss_kind):
    f = model.forward(w, X)
    oracle = LossOracle(loss_kind, Y)
    mean_loss = float(np.mean(loss_value(oracle, f)))
    acc = float(np.mean(np.argmax(f, axis=1) == np.argmax(Y, axis=1)))
    return mean_loss, acc


def train(config, dataset, on_record=None):
    """Run the configured training loop on ``dataset``.

    Emits one :class:`RunRecord` per minibatch step (via the returned result
    and, if given, the ``on_record`` callback as each step completes).
    ``train_loss``/``train_acc`` are recomputed on the full training set at
    the end of every epoch and carried forward in between.  ``jvp_calls`` and
    ``vjp_calls`` are cumulative over the run.  A non-finite batch loss stops
    the run after logging a diagnostic record.
    """
    if not isinstance(dataset, Dataset):
        dataset = Dataset(dataset[0], dataset[1])
    X, Y = dataset.inputs, dataset.targets
    n, in_dim = X.shape
    k = Y.shape[1]
    if config.batch_size > n:
        raise ValueError(
            f"batch_size {config.batch_size} exceeds dataset size {n}"
        )

    model = make_model(config.model, in_dim, k)
    w = model.init_params(config.seed)
    shuffle_rng = np.random.Generator(np.random.Philox(key=[config.seed, 1]))
    state = OptimizerState()

    records = []
    aborted = False
    abort_reason = None
    cum_jvp = 0
    cum_vjp = 0
    step_idx = 0
    train_loss, train_acc = _full_metrics(model, w, X, Y, config.loss)

    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            t0 = time.perf_counter()
            idx = perm[start : start + config.batch_size]
            w, info = _batch_step(model, w, X[idx], Y[idx], config, state)
            cum_jvp += info.jvp_calls
            cum_vjp += info.vjp_calls
            if info.finite and start + config.batch_size >= n:
                train_loss, train_acc = _full_metrics(model, w, X, Y, config.loss)
            rec = RunRecord(
                step=step_idx,
                epoch=epoch,
                wall_ms=(time.perf_counter() - t0) * 1000.0,
                batch_loss=info.batch_loss,
                train_loss=train_loss,
                train_acc=train_acc,
                eta=info.eta,
                gamma=info.gamma,
                inner_iters=info.inner_iters,
                jvp_calls=cum_jvp,
                vjp_calls=cum_vjp,
                descent_ip=info.descent_ip,
            )
            records.append(rec)
            if on_record is not None:
                on_record(rec)
            step_idx += 1
            if not info.finite:
                aborted = True
                abort_reason = f"non-finite batch loss at step {rec.step}"
                break
        if aborted:
            break

    return TrainResult(
        records=records,
        aborted=aborted,
        abort_reason=abort_reason,
        params=w,
        model=model,
    )
