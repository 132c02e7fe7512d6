"""Quantitative estimate monitors and the blow-up toolkit.

Everything here is a pure function of trajectory data.  The monitors
check, along a numerically integrated flow:

* the evolution identity of the coupled scalar (monitor_S_evolution),
* the minimum principle for S = R - alpha*|grad phi|^2,
* the gradient bound alpha*|grad phi|^2 <= sup R - min S(0),
* the heat-flow maximum principle for scalar-valued phi,
* metric-coefficient and arc-length distortion with a measured rate,
* the volume derivative identity and the exponential volume lower bound,
* spacetime curvature norms,
* the |Rm| versus |Ric| ratio diagnostic.

The blow-up toolkit selects near-maximal curvature points, applies
parabolic rescaling, and fits the small-ball volume expansion on model
geometries.

Conventions.  The scalar S and tensor norm |S_ij|^2 use the full
coupling alpha, matching their definitions in the geometry module.  The
evolution identity is checked for the flow-normalized pair

    Sigma = R - (alpha/2)|grad phi|^2,
    Sigma_ij = R_ij - (alpha/2) phi_i phi_j,

the tensor with dg/dt = -2 Sigma_ij, for which

    (d/dt - Lap) Sigma = 2 |Sigma_ij|^2 + alpha |Lap phi|^2

holds exactly; with the full-coupling S the left- and right-hand sides
differ by a term of order alpha^2 |grad phi|^4 already on flat tori.
The minimum principle and the gradient bound are monitored for the
full-coupling S itself (both hold for it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .geometry import (CurvatureFields, Fiber, HomogeneousState, State, WarpedState,
                       ball_volume_constant, curvature_fields, homogeneous_length,
                       homogeneous_volume, integrate_scalar, laplacian,
                       reduced_lengths_and_volume, scale_state, sphere_area)

EPS0 = 1e-8


# ---------------------------------------------------------------------------
# per-snapshot summaries


@dataclass
class MonitorRecord:
    """Summary statistics of one trajectory snapshot."""

    t: float
    min_s: float
    max_s: float
    max_grad_phi_sq: float
    max_ric: float
    max_rm: float
    max_abs_r: float
    phi_min: float
    phi_max: float
    length: float
    volume: float
    volume_integrand: float
    distortion_rate: float
    grad_margin: float
    acc_r: float
    acc_w: float
    dvdt_residual: float = 0.0


@dataclass
class MonitorState:
    """Running accumulators the integrator carries between steps."""

    min_s0: float
    sup_r: float
    acc_r: float
    acc_w: float
    prev_t: float
    prev_ir: float
    prev_iw: float
    eps0: float = EPS0

    @classmethod
    def start(cls, state: State, fields: CurvatureFields, eps0: float = EPS0):
        ir, iw = curvature_power_integrals(state, fields)
        return cls(min_s0=float(np.min(fields.s_scalar)),
                   sup_r=float(np.max(fields.scalar)),
                   acc_r=0.0, acc_w=0.0, prev_t=state.t,
                   prev_ir=ir, prev_iw=iw, eps0=eps0)

    def update(self, state: State, fields: CurvatureFields):
        """Advance accumulators to the state's time (call once per step)."""
        dt = state.t - self.prev_t
        ir, iw = curvature_power_integrals(state, fields)
        self.acc_r += 0.5 * (self.prev_ir + ir) * dt
        self.acc_w += 0.5 * (self.prev_iw + iw) * dt
        self.sup_r = max(self.sup_r, float(np.max(fields.scalar)))
        self.prev_t, self.prev_ir, self.prev_iw = state.t, ir, iw


def state_length_volume(state: State) -> tuple[float, float]:
    if isinstance(state, WarpedState):
        return reduced_lengths_and_volume(state)
    return homogeneous_length(state), homogeneous_volume(state)


def integrate_over_manifold(state: State, values: np.ndarray, volume: float) -> float:
    if isinstance(state, WarpedState):
        return integrate_scalar(state, values)
    return float(values[0]) * volume


def curvature_power_integrals(state: State, fields: CurvatureFields) -> tuple[float, float]:
    """(int |R|^p dmu, int |W|^p dmu) with p = (n+2)/2."""
    p = (state.n + 2) / 2.0
    _, vol = state_length_volume(state)
    ir = integrate_over_manifold(state, np.abs(fields.scalar) ** p, vol)
    iw = integrate_over_manifold(state, np.abs(fields.weyl_sq) ** (p / 2.0), vol)
    return ir, iw


def make_monitor_record(state: State, fields: CurvatureFields,
                        mon: MonitorState) -> MonitorRecord:
    alpha = state.alpha
    length, volume = state_length_volume(state)
    integrand = integrate_over_manifold(
        state, -fields.scalar + 0.5 * alpha * fields.grad_phi_sq, volume)
    max_grad = float(np.max(fields.grad_phi_sq))
    max_ric = fields.max_ric
    if isinstance(state, WarpedState):
        phi_min, phi_max = float(np.min(state.u)), float(np.max(state.u))
    else:
        phi_min = phi_max = 0.0
    margin = mon.sup_r + mon.eps0 - mon.min_s0 - alpha * max_grad
    return MonitorRecord(
        t=state.t,
        min_s=float(np.min(fields.s_scalar)),
        max_s=float(np.max(fields.s_scalar)),
        max_grad_phi_sq=max_grad,
        max_ric=max_ric,
        max_rm=fields.max_rm,
        max_abs_r=float(np.max(np.abs(fields.scalar))),
        phi_min=phi_min,
        phi_max=phi_max,
        length=length,
        volume=volume,
        volume_integrand=integrand,
        distortion_rate=2.0 * max_ric + 2.0 * alpha * max_grad,
        grad_margin=margin,
        acc_r=mon.acc_r,
        acc_w=mon.acc_w,
    )


# ---------------------------------------------------------------------------
# estimate monitors


def _records(traj):
    recs = traj.records
    if not recs:
        raise ValueError("trajectory has no records")
    return recs


def monitor_S_evolution(traj, k: int | None = None) -> float:
    """Sup-norm residual of the evolution identity

        (d/dt - Lap) Sigma - 2|Sigma_ij|^2 - alpha |Lap phi|^2

    with Sigma the flow-normalized scalar (see module docstring).  The
    time derivative is the central difference across snapshots
    k-1, k, k+1, which must be uniformly spaced; with k=None the worst
    residual over all uniform interior windows is returned.
    """
    recs = _records(traj)
    if k is not None:
        return _s_evolution_window(recs, k)
    worst = None
    for kk in range(1, len(recs) - 1):
        d1 = recs[kk].t - recs[kk - 1].t
        d2 = recs[kk + 1].t - recs[kk].t
        if abs(d1 - d2) > 1e-9 * max(d1, d2):
            continue
        worst = max(worst or 0.0, _s_evolution_window(recs, kk))
    if worst is None:
        raise ValueError("need at least three uniformly spaced snapshots")
    return worst


def _s_evolution_window(recs, k: int) -> float:
    if not (1 <= k <= len(recs) - 2):
        raise ValueError(f"window index {k} needs neighbors on both sides")
    prev, mid, nxt = recs[k - 1], recs[k], recs[k + 1]
    d1 = mid.t - prev.t
    d2 = nxt.t - mid.t
    if abs(d1 - d2) > 1e-9 * max(d1, d2):
        raise ValueError("snapshots are not uniformly spaced around the window")
    f_prev = curvature_fields(prev.state)
    f_mid = curvature_fields(mid.state)
    f_next = curvature_fields(nxt.state)
    dsdt = (f_next.s_flow - f_prev.s_flow) / (d1 + d2)
    if isinstance(mid.state, WarpedState):
        lap_s = laplacian(mid.state, f_mid.s_flow)
    else:
        lap_s = np.zeros_like(f_mid.s_flow)
    alpha = mid.state.alpha
    resid = dsdt - lap_s - 2.0 * f_mid.flow_tensor_sq - alpha * f_mid.lap_phi**2
    return float(np.max(np.abs(resid)))


def check_min_S_monotone(traj) -> float:
    """Worst per-step decrease of min S, normalized by 1 + |min S|.
    Zero when the minimum is nondecreasing, as the maximum principle
    predicts."""
    recs = _records(traj)
    worst = 0.0
    for a, b in zip(recs, recs[1:]):
        drop = (a.monitor.min_s - b.monitor.min_s) / (1.0 + abs(a.monitor.min_s))
        worst = max(worst, drop)
    return max(0.0, worst)


def check_gradient_bound(traj) -> float:
    """Minimum over time of the gradient-bound margin

        (sup_{t'<=t} max R + eps0) - min S(0) - alpha * max |grad phi|^2(t).

    Nonnegative means the bound holds along the whole run."""
    recs = _records(traj)
    return min(rec.monitor.grad_margin for rec in recs)


def phi_max_principle_applies(traj) -> bool:
    state = traj.records[0].state
    if isinstance(state, WarpedState):
        return state.winding == 0
    return all(fac.slope == 0.0 for fac in state.factors)


def check_phi_max_principle(traj) -> float | None:
    """Worst violation of inf phi(0) <= phi(t) <= sup phi(0).  Only
    meaningful for single-valued (zero winding) maps; returns None when
    skipped."""
    if not phi_max_principle_applies(traj):
        return None
    recs = _records(traj)
    lo0, hi0 = recs[0].monitor.phi_min, recs[0].monitor.phi_max
    worst = 0.0
    for rec in recs:
        worst = max(worst, rec.monitor.phi_max - hi0, lo0 - rec.monitor.phi_min)
    return max(0.0, worst)


def _coefficient_logs(state: State) -> np.ndarray:
    """Log of the metric coefficients in the two coordinate directions
    (g_xx = f^2 and the fiber coefficient psi^2), concatenated; for
    homogeneous states, the per-factor coefficients."""
    if isinstance(state, WarpedState):
        return np.concatenate([np.log(state.f**2), np.log(state.psi**2)])
    return np.log(state.coefficients())


def check_metric_distortion(traj, t0=None, t1=None) -> float:
    """Worst excess of |log g_t(V,V) - log g_t0(V,V)| over C_meas*|t-t0|
    for the coordinate directions V, plus the arc-length analogue
    |log L(t)/L(t0)| <= C_meas|t-t0|/2, with
    C_meas = sup over the window of (2 max|Ric| + 2 alpha max|grad phi|^2).

    t0/t1 select one snapshot pair, as record indices (ints) or times
    (floats, matched to the nearest record); with neither given the
    worst excess over all ordered pairs is returned.  Zero (up to eps0)
    means the distortion estimate holds.
    """
    recs = _records(traj)
    logs = np.stack([_coefficient_logs(rec.state) for rec in recs])
    rates = np.array([rec.monitor.distortion_rate for rec in recs])
    lens = np.array([rec.monitor.length for rec in recs])
    times = np.array([rec.t for rec in recs])

    def resolve(t) -> int:
        if isinstance(t, (int, np.integer)):
            return int(t)
        return int(np.argmin(np.abs(times - float(t))))

    def pair_excess(a: int, b: int) -> float:
        c_meas = float(np.max(rates[a:b + 1]))
        dt = times[b] - times[a]
        coeff = float(np.max(np.abs(logs[b] - logs[a]))) - c_meas * dt
        length = abs(math.log(lens[b] / lens[a])) - 0.5 * c_meas * dt
        return max(coeff, length)

    if t0 is not None or t1 is not None:
        if t0 is None or t1 is None:
            raise ValueError("give both snapshots or neither")
        a, b = sorted((resolve(t0), resolve(t1)))
        return max(0.0, pair_excess(a, b)) if a != b else 0.0

    worst = 0.0
    k = len(recs)
    for a in range(k - 1):
        c_run = np.maximum.accumulate(rates[a:])  # C_meas for [a, b]
        dt = times[a + 1:] - times[a]
        coeff = np.max(np.abs(logs[a + 1:] - logs[a]), axis=1) - c_run[1:] * dt
        length = np.abs(np.log(lens[a + 1:] / lens[a])) - 0.5 * c_run[1:] * dt
        worst = max(worst, float(np.max(coeff)), float(np.max(length)))
    return max(0.0, worst)


def check_volume_evolution(traj) -> tuple[float, float]:
    """(derivative residual, exponential lower-bound margin).

    The residual compares the discrete rate (V_{k+1}-V_k)/dt with the
    trapezoid average of int (-R + (alpha/2)|grad phi|^2) dmu, relative
    to 1 + |integrand|.  The margin is the worst relative slack in
    V(t) >= exp(-C'(t-t0)) V(t0) with C' the running sup of
    max|R| + (alpha/2) max|grad phi|^2; nonnegative means the bound
    holds."""
    recs = _records(traj)
    alpha = recs[0].state.alpha
    vols = np.array([rec.monitor.volume for rec in recs])
    times = np.array([rec.t for rec in recs])
    integrands = np.array([rec.monitor.volume_integrand for rec in recs])

    max_resid = 0.0
    for k in range(len(recs) - 1):
        dt = times[k + 1] - times[k]
        if dt <= 0.0:
            raise ValueError("record times must be strictly increasing")
        rate = (vols[k + 1] - vols[k]) / dt
        avg = 0.5 * (integrands[k] + integrands[k + 1])
        scale = 1.0 + max(abs(integrands[k]), abs(integrands[k + 1]))
        max_resid = max(max_resid, abs(rate - avg) / scale)

    decay = np.array([rec.monitor.max_abs_r + 0.5 * alpha * rec.monitor.max_grad_phi_sq
                      for rec in recs])
    c_run = np.maximum.accumulate(decay)
    lower = np.exp(-c_run * (times - times[0])) * vols[0]
    margin = float(np.min((vols - lower) / vols[0]))
    return max_resid, margin


# ---------------------------------------------------------------------------
# blow-up toolkit


@dataclass(frozen=True)
class BlowupPoint:
    t: float
    index: int
    x: float
    q: float


def pick_blowup_points(traj, c_pick: float = 2.0) -> list[BlowupPoint]:
    """Snapshot times and points where |Rm| attains a near-maximal value:
    Q_i = max|Rm|(t_i) >= (running spacetime max)/c_pick, restricted to
    times with curvature above its initial level and filtered so the Q_i
    are nondecreasing.  Runs with no curvature growth give an empty list."""
    if c_pick < 1.0:
        raise ValueError(f"c_pick must be >= 1, got {c_pick}")
    recs = _records(traj)
    rms = np.array([rec.monitor.max_rm for rec in recs])
    running = np.maximum.accumulate(rms)
    picks: list[BlowupPoint] = []
    last_q = -np.inf
    for k in range(1, len(recs)):
        q = rms[k]
        if q <= rms[0] or c_pick * q < running[k] or q < last_q:
            continue
        state = recs[k].state
        fields = curvature_fields(state)
        idx = int(np.argmax(fields.rm_sq))
        x = idx * state.h if isinstance(state, WarpedState) else 0.0
        assert c_pick * q >= running[k]
        picks.append(BlowupPoint(t=recs[k].t, index=idx, x=x, q=float(q)))
        last_q = q
    return picks


@dataclass
class RescaledState:
    """A state together with its parabolic zoom g -> q*g."""

    base: State
    q: float
    state: State


def parabolic_rescale(state: State, q: float) -> RescaledState:
    """Parabolic rescaling by q, verifying the exact scaling laws
    max|Rm| -> max|Rm|/q and S, |grad phi|^2 -> /q to 1e-12 relative."""
    scaled = scale_state(state, q)
    base_fields = curvature_fields(state)
    new_fields = curvature_fields(scaled)
    checks = (
        ("max|Rm|", np.asarray(base_fields.max_rm), np.asarray(new_fields.max_rm)),
        ("S", base_fields.s_scalar, new_fields.s_scalar),
        ("|grad phi|^2", base_fields.grad_phi_sq, new_fields.grad_phi_sq),
    )
    for name, base, new in checks:
        dev = float(np.max(np.abs(new - base / q)))
        if dev > 1e-12 * (1.0 + float(np.max(np.abs(base)))):
            raise ValueError(f"rescaling law violated for {name}: deviation {dev}")
    return RescaledState(base=state, q=q, state=scaled)


def geodesic_ball_volume(geometry: HomogeneousState, r: float) -> float:
    """Exact geodesic ball volume in a model geometry: flat products, or a
    single round sphere (radius below the conjugate distance)."""
    if r <= 0.0:
        raise ValueError(f"radius must be positive, got {r}")
    n = geometry.n
    if all(fac.kind is Fiber.FLAT_TORUS for fac in geometry.factors):
        inj = math.pi * math.sqrt(min(fac.coeff for fac in geometry.factors))
        if r >= inj:
            raise ValueError(f"radius {r} reaches past the injectivity radius {inj}")
        return ball_volume_constant(n) * r**n
    if len(geometry.factors) == 1 and geometry.factors[0].kind is Fiber.ROUND_SPHERE:
        rho = math.sqrt(geometry.factors[0].coeff)
        if r >= math.pi * rho:
            raise ValueError(f"radius {r} reaches past the sphere's diameter")
        val, err = quad(lambda s: (rho * math.sin(s / rho)) ** (n - 1), 0.0, r,
                        epsabs=1e-13, epsrel=1e-13)
        return sphere_area(n - 1) * val
    raise ValueError("ball volumes are only exact for flat products or a single round sphere")


def ball_volume_expansion_fit(geometry: HomogeneousState, radii) -> float:
    """Least-squares coefficient c in Vol B(r) = omega_n r^n (1 - c r^2)
    over the given radii, for comparison with R/(6(n+2))."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("need at least one radius")
    n = geometry.n
    omega = ball_volume_constant(n)
    vols = np.array([geodesic_ball_volume(geometry, r) for r in radii])
    y = 1.0 - vols / (omega * radii**n)
    return float(np.sum(y * radii**2) / np.sum(radii**4))


def spacetime_norms(traj, scaled: bool = False) -> tuple[float, float]:
    """Accumulated (int_0^T int |R|^{(n+2)/2} dmu dt, same for |W|).
    With scaled=True both are raised to the power 2/(n+2)."""
    recs = _records(traj)
    nr, nw = recs[-1].monitor.acc_r, recs[-1].monitor.acc_w
    if scaled:
        p = 2.0 / (recs[0].state.n + 2.0)
        nr, nw = nr**p, nw**p
    return nr, nw


def curvature_ratio_diagnostic(traj) -> tuple[np.ndarray, np.ndarray]:
    """Time series of max|Rm| / (1 + max|Ric|)."""
    recs = _records(traj)
    times = np.array([rec.t for rec in recs])
    ratios = np.array([rec.monitor.max_rm / (1.0 + rec.monitor.max_ric) for rec in recs])
    return times, ratios


def fit_order(scales, errors) -> float:
    """Least-squares convergence order: slope of log(error) vs log(scale)."""
    scales = np.asarray(scales, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0.0):
        raise ValueError("errors must be positive to fit an order")
    return float(np.polyfit(np.log(scales), np.log(errors), 1)[0])
