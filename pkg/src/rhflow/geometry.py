"""Symmetry-reduced metric/map states and their curvature in closed form.

Warped states live on S^1 x F with the cohomogeneity-one metric

    g = f(x)^2 dx^2 + psi(x)^2 g_F,    x in [0, 2*pi) periodic,

where the fiber (F, g_F) is either a unit round sphere S^{n-1}
(sectional curvature 1) or a flat torus T^{n-1}.  The coupled map
phi depends on x only and is stored as phi(x) = w*x + u(x) with an
integer winding number w and a periodic part u, so circle-valued maps
such as phi(x) = x are representable exactly.

With s the arclength coordinate (ds = f dx, so d/ds = (1/f) d/dx) the
curvature reduces to two sectional values,

    K_rad = -psi_ss / psi                (planes containing d/ds)
    K_fib = (c - psi_s^2) / psi^2        (planes tangent to the fiber)

with c = 1 for the round fiber and c = 0 for the flat one, and

    R        = 2(n-1) K_rad + (n-1)(n-2) K_fib
    |Ric|^2  = lam0^2 + (n-1) lam1^2,  lam0 = (n-1) K_rad,
                                       lam1 = K_rad + (n-2) K_fib
    |Rm|^2   = 4(n-1) K_rad^2 + 2(n-1)(n-2) K_fib^2.

All s-derivatives are taken with second-order periodic central
differences; second derivatives use the nested form (1/f) Dx((1/f) Dx).
Homogeneous product states (finitely many coefficients, one per factor)
provide the closed-form oracle substrate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

TWO_PI = 2.0 * math.pi


class Fiber(str, Enum):
    """Fiber geometry of the warped ansatz (and factor kind for products)."""

    ROUND_SPHERE = "round_sphere"
    FLAT_TORUS = "flat_torus"

    @property
    def curvature(self) -> float:
        """Sectional curvature of the unit model fiber (1 round, 0 flat)."""
        return 1.0 if self is Fiber.ROUND_SPHERE else 0.0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, 2*pi)."""

    m: int

    def __post_init__(self):
        if self.m < 8:
            raise ValueError(f"grid needs at least 8 points, got m={self.m}")

    @property
    def h(self) -> float:
        return TWO_PI / self.m

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.m) * self.h


def dx_periodic(values: np.ndarray, h: float) -> np.ndarray:
    """Second-order central difference d/dx on the periodic grid."""
    return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * h)


def _check_finite(name: str, values: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ValueError(f"non-finite value in {name} at grid index {bad[0]}")


def _check_positive(name: str, values: np.ndarray):
    bad = np.flatnonzero(~(values > 0.0))
    if bad.size:
        raise ValueError(f"{name} must be positive; first violation at grid index {bad[0]}")


@dataclass
class WarpedState:
    """Metric coefficients and map data of a warped state at one time.

    f, psi, u are arrays over the periodic grid; phi(x) = winding*x + u(x).
    """

    n: int
    fiber: Fiber
    alpha: float
    f: np.ndarray
    psi: np.ndarray
    winding: int = 0
    u: np.ndarray | None = None
    t: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension n must be >= 2, got {self.n}")
        if self.alpha < 0.0:
            raise ValueError(f"coupling alpha must be >= 0, got {self.alpha}")
        self.fiber = Fiber(self.fiber)
        self.f = np.asarray(self.f, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        if self.u is None:
            self.u = np.zeros_like(self.f)
        self.u = np.asarray(self.u, dtype=float)
        if not (self.f.shape == self.psi.shape == self.u.shape) or self.f.ndim != 1:
            raise ValueError("f, psi, u must be 1-d arrays of a common length")
        Grid(self.f.size)  # enforces m >= 8
        _check_positive("f", self.f)
        _check_positive("psi", self.psi)
        self.winding = int(self.winding)

    @property
    def m(self) -> int:
        return self.f.size

    @property
    def grid(self) -> Grid:
        return Grid(self.m)

    @property
    def h(self) -> float:
        return TWO_PI / self.m

    @property
    def fiber_curvature(self) -> float:
        return self.fiber.curvature

    def copy(self) -> "WarpedState":
        return WarpedState(self.n, self.fiber, self.alpha, self.f.copy(),
                           self.psi.copy(), self.winding, self.u.copy(), self.t)

    def phi_x(self) -> np.ndarray:
        """Coordinate derivative of phi = winding*x + u."""
        return self.winding + dx_periodic(self.u, self.h)


@dataclass(frozen=True)
class Factor:
    """One factor of a homogeneous product metric: coeff * g_model.

    The model is a unit round sphere S^dim (dim >= 2) or a flat torus
    T^dim.  A map slope is allowed only on flat circle factors (dim 1),
    where phi = slope * theta along the factor coordinate.
    """

    coeff: float
    kind: Fiber
    dim: int
    slope: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Fiber(self.kind))
        if self.coeff <= 0.0:
            raise ValueError(f"factor coefficient must be positive, got {self.coeff}")
        if self.dim < 1:
            raise ValueError(f"factor dimension must be >= 1, got {self.dim}")
        if self.kind is Fiber.ROUND_SPHERE and self.dim < 2:
            raise ValueError("round factors need dimension >= 2; a circle is flat")
        if self.slope != 0.0 and not (self.kind is Fiber.FLAT_TORUS and self.dim == 1):
            raise ValueError("map slope is only allowed on flat circle factors")

    @property
    def ric_eig(self) -> float:
        """Ricci eigenvalue on this factor's directions."""
        return (self.dim - 1) * self.kind.curvature / self.coeff


@dataclass
class HomogeneousState:
    """Product metric with constant coefficients, used for closed forms."""

    n: int
    alpha: float
    factors: tuple[Factor, ...]
    t: float = 0.0

    def __post_init__(self):
        self.factors = tuple(self.factors)
        if self.n < 2:
            raise ValueError(f"dimension n must be >= 2, got {self.n}")
        if self.alpha < 0.0:
            raise ValueError(f"coupling alpha must be >= 0, got {self.alpha}")
        total = sum(fac.dim for fac in self.factors)
        if total != self.n:
            raise ValueError(f"factor dimensions sum to {total}, expected n={self.n}")

    def copy(self) -> "HomogeneousState":
        return HomogeneousState(self.n, self.alpha, self.factors, self.t)

    def coefficients(self) -> np.ndarray:
        return np.array([fac.coeff for fac in self.factors])

    def with_coefficients(self, coeffs: np.ndarray, t: float) -> "HomogeneousState":
        factors = tuple(replace(fac, coeff=float(a)) for fac, a in zip(self.factors, coeffs))
        return HomogeneousState(self.n, self.alpha, factors, t)


State = WarpedState | HomogeneousState


@dataclass
class CurvatureFields:
    """Pointwise curvature and coupling quantities.

    Arrays are over the grid for warped states and length 1 for
    homogeneous ones.  s_scalar = R - alpha*|grad phi|^2 and
    s_tensor_sq = |R_ij - alpha phi_i phi_j|^2 use the full coupling.
    s_flow and flow_tensor_sq are the trace and squared norm of the
    tensor driving the metric flow, R_ij - (alpha/2) phi_i phi_j,
    which is the pair entering the evolution identity (see analysis).
    """

    n: int
    alpha: float
    k_rad: np.ndarray
    k_fib: np.ndarray
    scalar: np.ndarray
    ric_sq: np.ndarray
    rm_sq: np.ndarray
    weyl_sq: np.ndarray
    grad_phi_sq: np.ndarray
    lap_phi: np.ndarray
    s_scalar: np.ndarray
    s_tensor_sq: np.ndarray
    s_flow: np.ndarray
    flow_tensor_sq: np.ndarray
    ric_op: np.ndarray

    @property
    def max_rm(self) -> float:
        """max |Rm| = max sqrt(rm_sq) over the grid."""
        return float(np.sqrt(np.max(self.rm_sq)))

    @property
    def max_ric(self) -> float:
        return float(np.max(self.ric_op))


def s_derivative(state: WarpedState, values: np.ndarray) -> np.ndarray:
    """Arclength derivative (1/f) d/dx of a periodic grid function."""
    return dx_periodic(values, state.h) / state.f


def laplacian(state: WarpedState, values: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami operator on x-only scalars:
    v_ss + (n-1)(psi_s/psi) v_s."""
    v_s = s_derivative(state, values)
    v_ss = s_derivative(state, v_s)
    psi_s = s_derivative(state, state.psi)
    return v_ss + (state.n - 1) * (psi_s / state.psi) * v_s


def _weyl_sq(n: int, rm_sq, ric_sq, scalar_sq):
    # Orthogonal decomposition of Rm; identically zero for n <= 3.
    if n <= 3:
        return np.zeros_like(np.asarray(rm_sq, dtype=float))
    return rm_sq - 4.0 / (n - 2) * ric_sq + 2.0 / ((n - 1) * (n - 2)) * scalar_sq


def compute_curvature(state: WarpedState) -> CurvatureFields:
    """All curvature/coupling fields of a warped state, in closed form."""
    for name, arr in (("f", state.f), ("psi", state.psi), ("u", state.u)):
        _check_finite(name, arr)
    n = state.n
    alpha = state.alpha
    c = state.fiber_curvature

    psi_s = s_derivative(state, state.psi)
    psi_ss = s_derivative(state, psi_s)
    k_rad = -psi_ss / state.psi
    k_fib = (c - psi_s**2) / state.psi**2

    phi_x = state.phi_x()
    phi_s = phi_x / state.f
    phi_ss = s_derivative(state, phi_s)
    grad_phi_sq = phi_s**2
    lap_phi = phi_ss + (n - 1) * (psi_s / state.psi) * phi_s

    scalar = 2.0 * (n - 1) * k_rad + (n - 1) * (n - 2) * k_fib
    lam0 = (n - 1) * k_rad
    lam1 = k_rad + (n - 2) * k_fib
    ric_sq = lam0**2 + (n - 1) * lam1**2
    rm_sq = 4.0 * (n - 1) * k_rad**2 + 2.0 * (n - 1) * (n - 2) * k_fib**2
    weyl_sq = _weyl_sq(n, rm_sq, ric_sq, scalar**2)

    s_scalar = scalar - alpha * grad_phi_sq
    s_tensor_sq = (lam0 - alpha * grad_phi_sq) ** 2 + (n - 1) * lam1**2
    s_flow = scalar - 0.5 * alpha * grad_phi_sq
    flow_tensor_sq = (lam0 - 0.5 * alpha * grad_phi_sq) ** 2 + (n - 1) * lam1**2
    ric_op = np.maximum(np.abs(lam0), np.abs(lam1))

    return CurvatureFields(n, alpha, k_rad, k_fib, scalar, ric_sq, rm_sq, weyl_sq,
                           grad_phi_sq, lap_phi, s_scalar, s_tensor_sq,
                           s_flow, flow_tensor_sq, ric_op)


def compute_curvature_homogeneous(state: HomogeneousState) -> CurvatureFields:
    """Curvature of a product of round spheres and flat tori (constant).

    Flat factors contribute zero curvature; a round S^k factor with
    coefficient a has sectional curvature 1/a within the factor.  The
    k_rad/k_fib slots are filled only for layouts matching the warped
    ansatz (single factor, or flat circle base times a fiber factor);
    other products get zeros there, the scalar invariants are always
    exact.
    """
    n = state.n
    alpha = state.alpha
    scalar = 0.0
    ric_sq = 0.0
    rm_sq = 0.0
    grad = 0.0
    ric_op = 0.0
    s_tensor_sq = 0.0
    flow_tensor_sq = 0.0
    for fac in state.factors:
        eig = fac.ric_eig
        k = fac.kind.curvature / fac.coeff
        scalar += fac.dim * eig
        ric_sq += fac.dim * eig**2
        rm_sq += 2.0 * fac.dim * (fac.dim - 1) * k**2
        ric_op = max(ric_op, abs(eig))
        phi_term = alpha * fac.slope**2 / fac.coeff
        half_term = 0.5 * phi_term
        if fac.slope != 0.0:
            grad += fac.slope**2 / fac.coeff
            s_tensor_sq += (eig - phi_term) ** 2
            flow_tensor_sq += (eig - half_term) ** 2
        else:
            s_tensor_sq += fac.dim * eig**2
            flow_tensor_sq += fac.dim * eig**2

    if len(state.factors) == 1:
        fac = state.factors[0]
        k_rad = k_fib = fac.kind.curvature / fac.coeff
    elif (len(state.factors) == 2 and state.factors[0].dim == 1
          and state.factors[0].kind is Fiber.FLAT_TORUS):
        k_rad = 0.0
        k_fib = state.factors[1].kind.curvature / state.factors[1].coeff
    else:
        k_rad = k_fib = 0.0

    arr = lambda v: np.array([float(v)])
    weyl_sq = _weyl_sq(n, rm_sq, ric_sq, scalar**2)
    return CurvatureFields(
        n, alpha, arr(k_rad), arr(k_fib), arr(scalar), arr(ric_sq), arr(rm_sq),
        arr(weyl_sq), arr(grad), arr(0.0), arr(scalar - alpha * grad),
        arr(s_tensor_sq), arr(scalar - 0.5 * alpha * grad), arr(flow_tensor_sq),
        arr(ric_op))


def curvature_fields(state: State) -> CurvatureFields:
    if isinstance(state, WarpedState):
        return compute_curvature(state)
    return compute_curvature_homogeneous(state)


def scale_state(state: State, q: float):
    """Parabolic metric scaling g -> q*g (f, psi -> sqrt(q)*f, sqrt(q)*psi
    for warped states, coefficients -> q*a for homogeneous ones).
    phi and the flow time are left untouched."""
    if q <= 0.0:
        raise ValueError(f"scale factor must be positive, got {q}")
    root = math.sqrt(q)
    if isinstance(state, WarpedState):
        return WarpedState(state.n, state.fiber, state.alpha, root * state.f,
                           root * state.psi, state.winding, state.u.copy(), state.t)
    return state.with_coefficients(q * state.coefficients(), state.t)


def sphere_area(d: int) -> float:
    """Area (d-volume) of the unit round sphere S^d."""
    return 2.0 * math.pi ** ((d + 1) / 2.0) / math.gamma((d + 1) / 2.0)


def ball_volume_constant(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def fiber_volume(dim: int, kind: Fiber) -> float:
    """Volume of the unit model fiber: round S^dim or flat torus (2*pi)^dim."""
    if Fiber(kind) is Fiber.ROUND_SPHERE:
        return sphere_area(dim)
    return TWO_PI**dim


def reduced_lengths_and_volume(state: WarpedState) -> tuple[float, float]:
    """Arc length of the base circle and total volume,

        L = int f dx,    V = vol(fiber) * int f psi^{n-1} dx,

    by trapezoidal quadrature on the periodic grid (which is the plain
    Riemann sum there)."""
    h = state.h
    length = h * float(np.sum(state.f))
    vol = fiber_volume(state.n - 1, state.fiber) * h * float(
        np.sum(state.f * state.psi ** (state.n - 1)))
    return length, vol


def integrate_scalar(state: WarpedState, values: np.ndarray) -> float:
    """int values dmu over the warped manifold."""
    h = state.h
    return fiber_volume(state.n - 1, state.fiber) * h * float(
        np.sum(values * state.f * state.psi ** (state.n - 1)))


def homogeneous_volume(state: HomogeneousState) -> float:
    vol = 1.0
    for fac in state.factors:
        vol *= fiber_volume(fac.dim, fac.kind) * fac.coeff ** (fac.dim / 2.0)
    return vol


def homogeneous_length(state: HomogeneousState) -> float:
    """Representative curve length: circumference scale of the first factor."""
    return TWO_PI * math.sqrt(state.factors[0].coeff)
