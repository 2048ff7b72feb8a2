"""Dual gradient flow integration.

The flow solves, from lambda(0) = 0,

    x(t)       = conj_grad(A* lambda(t))
    d/dt lambda(t) = y_delta - A x(t)

by fixed-step Euler or classic RK4. Along any exact trajectory the residual
||A x(t) - y_delta|| is non-increasing, and the explicit Euler scheme
preserves this whenever dt * ||A||^2 <= 4 c0 (the same bound is adopted for
RK4, conservatively).

Problems are duck-typed: anything with attributes op, reg, y_delta (and
optionally y, delta, x_true, error_norm, dt) works.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .spaces import winner, wnorm


@dataclass(frozen=True)
class RK4Tableau:
    """Strictly lower-triangular Runge-Kutta tableau with weights b."""

    gamma: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, float)
        b = np.asarray(self.b, float)
        if g.shape != (4, 4) or b.shape != (4,):
            raise ValueError("expected a 4x4 tableau with 4 weights")
        if np.any(np.triu(g) != 0.0):
            raise ValueError("tableau must be strictly lower triangular")
        if abs(b.sum() - 1.0) > 1e-14:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "b", b)


CLASSIC_RK4 = RK4Tableau(
    gamma=np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    ),
    b=np.array([1 / 6, 1 / 3, 1 / 3, 1 / 6]),
)


@dataclass
class DualState:
    """One flow sample: dual variable, cached primal iterate, diagnostics.

    solver_state is an opaque warm-start token for iterative conj_grad
    solvers; it travels with the state and has no semantic content.
    """

    t: float
    lam: np.ndarray
    x: np.ndarray
    residual_norm: float
    r_value: float
    dual_objective: float
    relative_error: float | None = None
    solver_state: object = None


@dataclass
class Trajectory:
    """Per-step scalar traces plus (possibly decimated) full states."""

    ts: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    r_values: list = field(default_factory=list)
    dual_objectives: list = field(default_factory=list)
    relative_errors: list = field(default_factory=list)
    states: list = field(default_factory=list)
    stop_reason: str = ""
    scheme: str = "rk4"
    dt: float = 0.0

    def append(self, state, keep_state):
        self.ts.append(state.t)
        self.residual_norms.append(state.residual_norm)
        self.r_values.append(state.r_value)
        self.dual_objectives.append(state.dual_objective)
        self.relative_errors.append(state.relative_error)
        if keep_state:
            self.states.append(state)

    def __len__(self):
        return len(self.ts)

    def theta(self, a):
        t = np.asarray(self.ts)
        r = np.asarray(self.residual_norms)
        return (t + a) * r * r

    @property
    def final_state(self):
        return self.states[-1]


def make_state(problem, t, lam, warm=None):
    """Assemble a consistent DualState at (t, lam): recomputes x, the
    residual norm, R(x), the dual objective and (if ground truth is present)
    the relative error."""
    op, reg = problem.op, problem.reg
    xi = op.rmatvec(lam)
    x, warm = reg.conj_grad_state(xi, warm)
    r = op.matvec(x) - problem.y_delta
    rn = wnorm(op.y_weights, r)
    rv = reg.value(x)
    # d(lam) = R*(A* lam) - <lam, y_delta>, with R*(xi) = <xi, x> - R(x)
    dual = winner(op.x_weights, xi, x) - rv - winner(op.y_weights, lam, problem.y_delta)
    rel = None
    x_true = getattr(problem, "x_true", None)
    if x_true is not None:
        p = 1 if getattr(problem, "error_norm", "l2") == "l1" else 2
        rel = wnorm(op.x_weights, x - x_true, p) / wnorm(op.x_weights, x_true, p)
    return DualState(t, lam, x, rn, rv, dual, rel, warm)


def flow_init(problem):
    """Initial state at t = 0, lambda = 0."""
    m = problem.op.shape[0]
    return make_state(problem, 0.0, np.zeros(m))


def rhs(lam, problem):
    """Phi(lambda) = y_delta - A conj_grad(A* lambda)."""
    op, reg = problem.op, problem.reg
    return problem.y_delta - op.matvec(reg.conj_grad(op.rmatvec(lam)))


def euler_step(state, dt, problem):
    if dt <= 0:
        raise ValueError("dt must be positive")
    lam = state.lam + dt * (problem.y_delta - problem.op.matvec(state.x))
    return make_state(problem, state.t + dt, lam, state.solver_state)


def rk4_step(state, dt, problem, tableau=CLASSIC_RK4):
    if dt <= 0:
        raise ValueError("dt must be positive")
    op, reg = problem.op, problem.reg
    warm = state.solver_state
    slopes = []  # f_i = y_delta - A k_i at the stage points
    for i in range(4):
        omega = state.lam
        for j in range(i):
            g = tableau.gamma[i, j]
            if g != 0.0:
                omega = omega + dt * g * slopes[j]
        if i == 0:
            k = state.x  # stage 1 evaluates at lambda_n itself
        else:
            k, warm = reg.conj_grad_state(op.rmatvec(omega), warm)
        slopes.append(problem.y_delta - op.matvec(k))
    lam = state.lam + dt * sum(b * f for b, f in zip(tableau.b, slopes))
    return make_state(problem, state.t + dt, lam, warm)


_STEPPERS = {"euler": euler_step, "rk4": rk4_step}


def step(state, dt, problem, scheme="rk4"):
    return _STEPPERS[scheme](state, dt, problem)


def stability_max_step(op, reg):
    """Largest safe Euler step 4 c0 / ||A||^2 (= 2/L for L = ||A||^2/(2 c0)).

    ||A|| is measured in the norm pairing of the regularizer: the exact
    L1->L2 column norm when the regularizer is strongly convex in L1
    (entropy), the weighted-L2 power-method estimate otherwise. Returns +inf
    for the zero operator.
    """
    if reg.primal_p == 1:
        nrm = operators.norm_l1_to_l2(op)
    else:
        nrm = op.norm()
    if nrm == 0.0:
        return math.inf
    return 4.0 * reg.c0 / nrm**2


def lipschitz_constant(op, reg):
    """Global Lipschitz constant L = ||A||^2 / (2 c0) of the flow field."""
    if reg.primal_p == 1:
        nrm = operators.norm_l1_to_l2(op)
    else:
        nrm = op.norm()
    return nrm**2 / (2.0 * reg.c0)


def default_dt(problem):
    dt = getattr(problem, "dt", None)
    if dt is None:
        dt = 0.9 * stability_max_step(problem.op, problem.reg)
    if not np.isfinite(dt):
        raise ValueError("no finite default step size for a zero operator; pass dt")
    return dt


def integrate(problem, scheme="rk4", dt=None, t_max=None, stop=None,
              observers=(), store_every=1, max_steps=10_000_000):
    """Integrate the flow from lambda(0) = 0 until `stop` fires or t_max
    (whichever first), sampling scalar traces every step.

    stop : callable(DualState) -> bool, checked on every sample including
        the initial one.
    store_every : keep full states every k-th step (0 keeps only the first
        and final states); scalar traces are always kept for all steps.
    observers : callables receiving each sampled state.

    The stop reason is 'stop' when the predicate fired, 'budget' when t_max
    or max_steps ran out first.
    """
    if dt is None:
        dt = default_dt(problem)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_max is None and stop is None:
        raise ValueError("need a stop predicate or t_max")

    traj = Trajectory(scheme=scheme, dt=dt)
    state = flow_init(problem)
    n = 0
    while True:
        keep = store_every > 0 and n % store_every == 0
        traj.append(state, keep)
        for obs in observers:
            obs(state)
        if stop is not None and stop(state):
            traj.stop_reason = "stop"
            break
        if t_max is not None and state.t >= t_max - 1e-12 * max(1.0, t_max):
            traj.stop_reason = "budget"
            break
        if n >= max_steps:
            traj.stop_reason = "budget"
            break
        state = step(state, dt, problem, scheme)
        n += 1
    if not traj.states or traj.states[-1] is not state:
        traj.states.append(state)
    return traj
