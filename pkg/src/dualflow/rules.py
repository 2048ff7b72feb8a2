"""Stopping-time selection for the dual gradient flow.

Three rules are provided. The a priori rule picks t = c * omega * delta^(q-2)
from the noise level alone. The discrepancy principle (dp) stops at the first
time the residual falls to tau * delta (tau > 1) and refines the crossing by
bisection on the final step. The heuristic discrepancy principle (hdp) needs
no noise level: it minimizes Theta(t) = (t + a) ||A x(t) - y_delta||^2 over
the sampled trajectory.
"""

from dataclasses import dataclass, field

import numpy as np

from .flow import flow_init, step, integrate, default_dt, Trajectory


@dataclass
class StopOutcome:
    """Chosen stopping time with the flow state and rule diagnostics."""

    rule: str                 # 'apriori' | 'dp' | 'hdp' | 'budget'
    t_stop: float
    state: object
    delta_star: float         # residual norm at the stopping time
    trajectory: Trajectory
    diagnostics: dict = field(default_factory=dict)

    def summary(self):
        out = {
            "rule": self.rule,
            "t_stop": self.t_stop,
            "delta_star": self.delta_star,
            "re": self.state.relative_error,
            "theta_min": self.diagnostics.get("theta_min"),
            "kappa_hat": self.diagnostics.get("kappa_hat"),
        }
        return out


@dataclass
class DpConfig:
    tau: float
    delta: float | None = None

    def __post_init__(self):
        if self.tau <= 1:
            raise ValueError("discrepancy principle needs tau > 1")


@dataclass
class HdpConfig:
    a: float
    t_max: float
    stall_window: int = 500

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("heuristic rule needs a > 0")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")


@dataclass
class AprioriConfig:
    omega: float = 1.0
    q: float = 1.0
    c_scale: float = 1.0

    def __post_init__(self):
        if self.omega <= 0 or self.c_scale <= 0 or not 0 < self.q <= 1:
            raise ValueError("need omega > 0, c_scale > 0 and q in (0, 1]")


def apriori_stop_time(delta, omega=1.0, q=1.0, c_scale=1.0):
    """t = c_scale * omega * delta^(q-2); grows as the noise level shrinks."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return c_scale * omega * delta ** (q - 2.0)


def _kappa_hat(traj, delta):
    if delta is None or delta <= 0:
        return None
    return float(np.min(traj.residual_norms)) / delta


def apriori_stop(problem, delta=None, omega=1.0, q=1.0, c_scale=1.0,
                 scheme="rk4", dt=None, store_every=0):
    """Integrate to the a priori time t_delta (final step shortened to land
    on it exactly) and return the state there."""
    delta = problem.delta if delta is None else delta
    t_star = apriori_stop_time(delta, omega, q, c_scale)
    if dt is None:
        dt = default_dt(problem)
    traj = integrate(problem, scheme=scheme, dt=dt, t_max=t_star,
                     store_every=store_every)
    state = traj.states[-1]
    remainder = t_star - state.t
    if remainder > 1e-12 * max(1.0, t_star):
        state = step(state, remainder, problem, scheme)
        traj.append(state, True)
    return StopOutcome("apriori", state.t, state, state.residual_norm, traj,
                       {"t_target": t_star, "kappa_hat": _kappa_hat(traj, delta)})


def dp_stop(problem, tau, delta=None, scheme="rk4", dt=None, t_max=None,
            tol_cross=1e-3, store_every=0, max_refine=80):
    """Discrepancy principle: first time with residual <= tau * delta.

    If the initial residual is already below the threshold the outcome is
    t = 0. Otherwise integration proceeds until the first step crossing, and
    the crossing is refined by bisection on the step length (re-integrating
    the bracketed step) until the residual lies in tau*delta*(1 +/- tol_cross).
    Exhausting t_max before the crossing yields a 'budget' outcome with the
    best state reached.
    """
    DpConfig(tau)
    delta = problem.delta if delta is None else delta
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    threshold = tau * delta
    if dt is None:
        dt = default_dt(problem)
    if t_max is None:
        t_max = getattr(problem, "t_max", None) or 1e5

    traj = Trajectory(scheme=scheme, dt=dt)
    state = flow_init(problem)
    traj.append(state, True)
    if state.residual_norm <= threshold:
        return StopOutcome("dp", 0.0, state, state.residual_norm, traj,
                           {"kappa_hat": _kappa_hat(traj, delta)})

    n = 0
    while state.residual_norm > threshold:
        if state.t >= t_max:
            traj.stop_reason = "budget"
            return StopOutcome("budget", state.t, state, state.residual_norm,
                               traj, {"kappa_hat": _kappa_hat(traj, delta)})
        prev = state
        state = step(state, dt, problem, scheme)
        n += 1
        keep = store_every > 0 and n % store_every == 0
        traj.append(state, keep)

    # bisection on the step length over the bracketing interval
    bracket = (prev.t, state.t)
    lo, hi = 0.0, state.t - prev.t
    best = state
    refines = 0
    band_lo = threshold * (1.0 - tol_cross)
    band_hi = threshold * (1.0 + tol_cross)
    while not (band_lo <= best.residual_norm <= band_hi) and refines < max_refine:
        mid = 0.5 * (lo + hi)
        cand = step(prev, mid, problem, scheme)
        refines += 1
        if cand.residual_norm > threshold:
            lo = mid
        else:
            hi = mid
            best = cand
    traj.append(best, True)
    traj.stop_reason = "stop"
    diag = {"bracket": bracket, "refine_iters": refines,
            "kappa_hat": _kappa_hat(traj, delta)}
    return StopOutcome("dp", best.t, best, best.residual_norm, traj, diag)


def hdp_stop(problem, a, t_max, stall_window=500, scheme="rk4", dt=None,
             store_every=0):
    """Heuristic discrepancy principle: minimize Theta(t) = (t+a) r(t)^2
    over the sample grid in [0, t_max].

    Always returns the best sample seen. Integration ends early when the
    running minimum has not improved for `stall_window` consecutive samples
    and t has passed 10x the current argmin. The outcome is tagged 'budget'
    when the minimum was still improving at the horizon (no interior
    minimizer was identified), 'hdp' otherwise.
    """
    HdpConfig(a, t_max, stall_window)
    if dt is None:
        dt = default_dt(problem)

    best = {"theta": np.inf, "state": None, "since": 0}

    def track(state):
        theta = (state.t + a) * state.residual_norm**2
        if theta < best["theta"]:
            best.update(theta=theta, state=state, since=0)
        else:
            best["since"] += 1

    def stalled(state):
        return (best["since"] >= stall_window
                and state.t >= 10.0 * best["state"].t)

    traj = integrate(problem, scheme=scheme, dt=dt, t_max=t_max,
                     stop=stalled, observers=[track], store_every=store_every)
    state = best["state"]
    theta_hist = traj.theta(a)
    interior = state.t < traj.ts[-1]
    diag = {
        "theta_min": best["theta"],
        "theta_argmin_t": state.t,
        "stall_fired": traj.stop_reason == "stop",
        "kappa_hat": _kappa_hat(traj, problem.delta),
        "theta_history": theta_hist,
    }
    rule = "hdp" if interior else "budget"
    return StopOutcome(rule, state.t, state, state.residual_norm, traj, diag)


def check_noise_condition(trajectory, delta):
    """kappa_hat = min_t ||A x(t) - y_delta|| / delta over the trajectory.

    Values bounded away from zero indicate the residual plateaus above a
    fixed multiple of the noise level, supporting the noise condition that
    makes the heuristic rule well posed."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    return float(np.min(trajectory.residual_norms)) / delta
