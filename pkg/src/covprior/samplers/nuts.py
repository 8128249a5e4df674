"""No-U-Turn sampler with dual-averaging step-size adaptation.

This is the slice-sampling variant of NUTS: a slice variable bounds the set
of acceptable trajectory states, the trajectory grows by repeated doubling in
a random direction until it makes a U-turn (or hits the depth cap), and the
next state is drawn from the acceptable states while the tree is built.
A diagonal metric is estimated over expanding warmup windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import AdaptationFailure

MAX_ENERGY_ERROR = 1000.0
MIN_STEP_SIZE = 1e-12


@dataclass
class NutsSettings:
    target_accept: float = 0.8
    max_tree_depth: int = 10
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    init_radius: float = 2.0


@dataclass
class ChainResult:
    positions: np.ndarray
    logp: np.ndarray
    divergent: np.ndarray
    depth: np.ndarray
    accept_stat: np.ndarray
    step_size: float
    inv_mass: np.ndarray
    warmup_divergences: int


class DualAveraging:
    """Step-size adaptation by dual averaging of the acceptance statistic."""

    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * step_size)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.m = 0
        self.h_bar = 0.0
        self.log_eps = np.log(step_size)
        self.log_eps_bar = 0.0

    def update(self, accept_stat):
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat)
        self.log_eps = self.mu - np.sqrt(m) / self.gamma * self.h_bar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return float(np.exp(self.log_eps))

    @property
    def final_step_size(self):
        return float(np.exp(self.log_eps_bar))


class _Target:
    """Wraps ``value_and_grad`` so failures count as zero density."""

    def __init__(self, value_and_grad):
        self.f = getattr(value_and_grad, "fast", value_and_grad)

    def __call__(self, x):
        try:
            logp, grad = self.f(x)
        except (ValueError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError):
            return -np.inf, None
        # a non-finite entry makes the sum non-finite
        if not (math.isfinite(logp) and math.isfinite(grad.sum())):
            return -np.inf, None
        return logp, grad


def _leapfrog(target, theta, r, grad, eps, inv_mass):
    r = r + (0.5 * eps) * grad
    theta = theta + eps * (inv_mass * r)
    logp, grad_new = target(theta)
    if grad_new is None:
        return theta, r, -np.inf, grad
    r = r + (0.5 * eps) * grad_new
    return theta, r, logp, grad_new


def find_reasonable_step_size(target, theta, logp, grad, inv_mass, rng, eps=1.0):
    """Double or halve ``eps`` until a single leapfrog step crosses acceptance 1/2."""
    r = rng.standard_normal(theta.size) / np.sqrt(inv_mass)
    h0 = logp - 0.5 * np.dot(r, inv_mass * r)

    def log_ratio(e):
        _, r1, lp1, _ = _leapfrog(target, theta, r, grad, e, inv_mass)
        h1 = lp1 - 0.5 * np.dot(r1, inv_mass * r1)
        return h1 - h0 if np.isfinite(h1) else -np.inf

    lr = log_ratio(eps)
    a = 1.0 if lr > np.log(0.5) else -1.0
    for _ in range(100):
        if not a * lr > -a * np.log(2.0):
            break
        eps = eps * 2.0**a
        lr = log_ratio(eps)
    return eps


class _Tree:
    __slots__ = (
        "theta_minus", "r_minus", "grad_minus",
        "theta_plus", "r_plus", "grad_plus",
        "theta_prop", "logp_prop", "grad_prop",
        "n", "s", "alpha", "n_alpha", "divergent",
    )


def _no_u_turn(theta_minus, theta_plus, r_minus, r_plus, inv_mass):
    dtheta = theta_plus - theta_minus
    return np.dot(dtheta, inv_mass * r_minus) >= 0 and np.dot(dtheta, inv_mass * r_plus) >= 0


def _build_tree(target, theta, r, grad, log_u, v, j, eps, h0, inv_mass, rng):
    if j == 0:
        theta1, r1, logp1, grad1 = _leapfrog(target, theta, r, grad, v * eps, inv_mass)
        h1 = logp1 - 0.5 * np.dot(r1, inv_mass * r1)
        t = _Tree()
        t.theta_minus = t.theta_plus = t.theta_prop = theta1
        t.r_minus = t.r_plus = r1
        t.grad_minus = t.grad_plus = t.grad_prop = grad1
        t.logp_prop = logp1
        finite = np.isfinite(h1)
        t.n = 1 if finite and log_u <= h1 else 0
        t.divergent = not finite or (h0 - h1) > MAX_ENERGY_ERROR
        t.s = not t.divergent
        t.alpha = (1.0 if h1 >= h0 else float(np.exp(h1 - h0))) if finite else 0.0
        t.n_alpha = 1
        return t

    t = _build_tree(target, theta, r, grad, log_u, v, j - 1, eps, h0, inv_mass, rng)
    if not t.s:
        return t
    if v == -1:
        t2 = _build_tree(target, t.theta_minus, t.r_minus, t.grad_minus, log_u, v, j - 1, eps, h0, inv_mass, rng)
        t.theta_minus, t.r_minus, t.grad_minus = t2.theta_minus, t2.r_minus, t2.grad_minus
    else:
        t2 = _build_tree(target, t.theta_plus, t.r_plus, t.grad_plus, log_u, v, j - 1, eps, h0, inv_mass, rng)
        t.theta_plus, t.r_plus, t.grad_plus = t2.theta_plus, t2.r_plus, t2.grad_plus
    n_total = t.n + t2.n
    if n_total > 0 and rng.uniform() < t2.n / n_total:
        t.theta_prop, t.logp_prop, t.grad_prop = t2.theta_prop, t2.logp_prop, t2.grad_prop
    t.alpha += t2.alpha
    t.n_alpha += t2.n_alpha
    t.divergent = t.divergent or t2.divergent
    t.s = t2.s and _no_u_turn(t.theta_minus, t.theta_plus, t.r_minus, t.r_plus, inv_mass)
    t.n = n_total
    return t


def nuts_transition(target, theta, logp, grad, eps, inv_mass, rng, max_depth):
    """One NUTS iteration.

    Returns ``(theta, logp, grad, depth, divergent, accept_stat)``.
    """
    r0 = rng.standard_normal(theta.size) / np.sqrt(inv_mass)
    h0 = logp - 0.5 * np.dot(r0, inv_mass * r0)
    log_u = h0 + np.log(rng.uniform())
    theta_minus = theta_plus = theta
    r_minus = r_plus = r0
    grad_minus = grad_plus = grad
    new_theta, new_logp, new_grad = theta, logp, grad
    n = 1
    depth = 0
    divergent = False
    alpha, n_alpha = 0.0, 0
    s = True
    while s and depth < max_depth:
        v = 1 if rng.uniform() < 0.5 else -1
        if v == -1:
            t = _build_tree(target, theta_minus, r_minus, grad_minus, log_u, v, depth, eps, h0, inv_mass, rng)
            theta_minus, r_minus, grad_minus = t.theta_minus, t.r_minus, t.grad_minus
        else:
            t = _build_tree(target, theta_plus, r_plus, grad_plus, log_u, v, depth, eps, h0, inv_mass, rng)
            theta_plus, r_plus, grad_plus = t.theta_plus, t.r_plus, t.grad_plus
        alpha += t.alpha
        n_alpha += t.n_alpha
        divergent = divergent or t.divergent
        if t.s and rng.uniform() < t.n / n:
            new_theta, new_logp, new_grad = t.theta_prop, t.logp_prop, t.grad_prop
        n += t.n
        s = t.s and _no_u_turn(theta_minus, theta_plus, r_minus, r_plus, inv_mass)
        depth += 1
    accept = alpha / n_alpha if n_alpha else 0.0
    return new_theta, new_logp, new_grad, depth, divergent, accept


def _initial_point(target, dim, rng, radius):
    for _ in range(100):
        theta = rng.uniform(-radius, radius, size=dim)
        logp, grad = target(theta)
        if grad is not None:
            return theta, logp, grad
    raise AdaptationFailure("no initial point with finite density and gradient in 100 tries")


def adaptation_windows(warmup, init_buffer=75, term_buffer=50, base_window=25):
    """Metric windows ``[(start, end), ...]`` within warmup.

    After an initial buffer where only the step size adapts, windows double
    in length and the last one stretches to the terminal buffer. Short warmups
    shrink the buffers to 15% and 10% of the total; below 20 iterations no
    metric is estimated.
    """
    if warmup < 20:
        return []
    if init_buffer + base_window + term_buffer > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    end_slow = warmup - term_buffer
    windows = []
    start, size = init_buffer, base_window
    while start < end_slow:
        end = start + size
        # fold a window into its predecessor-sized successor if the next one would not fit
        if end + 2 * size > end_slow:
            end = end_slow
        windows.append((start, end))
        start, size = end, 2 * size
    return windows


def run_chain(value_and_grad, dim, warmup, samples, rng, settings=None, init=None):
    """Run one adaptive NUTS chain.

    ``value_and_grad(x)`` returns the log density and its gradient. Warmup
    adapts the step size by dual averaging throughout. At the end of each
    window from :func:`adaptation_windows` the diagonal inverse metric is
    set from that window's draws, and the step size is re-initialized and
    its adaptation restarted.
    """
    settings = settings or NutsSettings()
    target = _Target(value_and_grad)
    if init is None:
        theta, logp, grad = _initial_point(target, dim, rng, settings.init_radius)
    else:
        theta = np.asarray(init, dtype=float)
        logp, grad = target(theta)
        if grad is None:
            raise AdaptationFailure("initial point has no finite density")
    inv_mass = np.ones(dim)

    def new_adapter(eps0):
        return DualAveraging(eps0, settings.target_accept, settings.gamma, settings.t0, settings.kappa)

    eps = find_reasonable_step_size(target, theta, logp, grad, inv_mass, rng)
    adapter = new_adapter(eps)
    window_end = {end: start for start, end in adaptation_windows(warmup)}
    trace = np.empty((warmup, dim))
    warmup_div = 0
    for it in range(warmup):
        theta, logp, grad, _, div, acc = nuts_transition(
            target, theta, logp, grad, eps, inv_mass, rng, settings.max_tree_depth
        )
        warmup_div += bool(div)
        eps = adapter.update(acc)
        if not eps > MIN_STEP_SIZE:
            raise AdaptationFailure(f"step size collapsed to {eps:.3g} during warmup")
        trace[it] = theta
        start = window_end.get(it + 1)
        if start is not None:
            k = it + 1 - start
            var = np.var(trace[start:it + 1], axis=0, ddof=1)
            # shrink toward a small constant as the window is short
            inv_mass = (k / (k + 5.0)) * var + 1e-3 * (5.0 / (k + 5.0))
            eps = find_reasonable_step_size(target, theta, logp, grad, inv_mass, rng, eps)
            adapter = new_adapter(eps)
    if warmup > 0:
        eps = adapter.final_step_size
    if not eps > MIN_STEP_SIZE:
        raise AdaptationFailure(f"step size collapsed to {eps:.3g}")

    pos = np.empty((samples, dim))
    lp = np.empty(samples)
    divergent = np.zeros(samples, dtype=bool)
    depth = np.zeros(samples, dtype=int)
    accept = np.empty(samples)
    for it in range(samples):
        theta, logp, grad, dep, div, acc = nuts_transition(
            target, theta, logp, grad, eps, inv_mass, rng, settings.max_tree_depth
        )
        pos[it] = theta
        lp[it] = logp
        divergent[it] = div
        depth[it] = dep
        accept[it] = acc
    return ChainResult(pos, lp, divergent, depth, accept, eps, inv_mass, warmup_div)
