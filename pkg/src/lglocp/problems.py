"""Built-in test problems and their reference solutions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import sympy
from scipy.integrate import solve_ivp

from .transcription import Horizon, OcpProblem

EARTH_RADIUS_KM = 6378.1363
DAY_S = 86400.0
MU_EARTH_KM3_S2 = 398600.4418
P0_KM = 9128.0
PF_KM = 42164.0


def mu_canonical() -> float:
    """Earth's gravitational parameter in Earth-radius / day units."""
    return MU_EARTH_KM3_S2 * DAY_S**2 / EARTH_RADIUS_KM**3


class _Lambdified:
    """Numpy evaluation of a list of sympy expressions, broadcast over K nodes."""

    def __init__(self, args, exprs):
        self.n_out = len(exprs)
        self.fn = sympy.lambdify(args, list(exprs), modules="numpy", cse=True)

    def __call__(self, cols, k):
        vals = self.fn(*cols)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), (k,)) for v in vals], axis=-1)


def symbolic_problem(states, controls, rates, running, terminal, **kwargs) -> OcpProblem:
    """Build an :class:`OcpProblem` with exact first and second derivatives.

    ``states``/``controls`` are sympy symbols, ``rates`` the right-hand sides,
    ``running``/``terminal`` scalar expressions (terminal in the states only).
    """
    z = list(states) + list(controls)
    n, m = len(states), len(controls)
    nz = n + m
    f = sympy.Matrix(rates)
    jac = f.jacobian(z)
    hess = [sympy.hessian(fi, z) for fi in f]
    g = sympy.sympify(running)
    phi = sympy.sympify(terminal)

    f_fn = _Lambdified(z, list(f))
    jac_fn = _Lambdified(z, list(jac))
    hess_fn = _Lambdified(z, [e for h in hess for e in h])
    g_fn = _Lambdified(z, [g])
    dg_fn = _Lambdified(z, [sympy.diff(g, v) for v in z])
    d2g_fn = _Lambdified(z, list(sympy.hessian(g, z)))
    phi_fn = _Lambdified(states, [phi])
    dphi_fn = _Lambdified(states, [sympy.diff(phi, v) for v in states])
    d2phi_fn = _Lambdified(states, list(sympy.hessian(phi, states)))

    def cols(X, U):
        X = np.atleast_2d(X)
        U = np.atleast_2d(U).reshape(len(X), m)
        return [X[:, i] for i in range(n)] + [U[:, j] for j in range(m)], len(X)

    def dynamics(X, U):
        return f_fn(*cols(X, U))

    def dynamics_jac(X, U):
        a, k = cols(X, U)
        return jac_fn(a, k).reshape(k, n, nz)

    def dynamics_hess(X, U, Y):
        a, k = cols(X, U)
        H = hess_fn(a, k).reshape(k, n, nz, nz)
        return np.einsum("ks,ksij->kij", np.asarray(Y).reshape(k, n), H)

    def running_cost(X, U):
        return g_fn(*cols(X, U))[:, 0]

    def running_cost_grad(X, U):
        return dg_fn(*cols(X, U))

    def running_cost_hess(X, U):
        a, k = cols(X, U)
        return d2g_fn(a, k).reshape(k, nz, nz)

    def one(x):
        return [np.atleast_1d(np.asarray(x, dtype=float))[i:i + 1] for i in range(n)]

    return OcpProblem(
        n=n, m=m,
        dynamics=dynamics, dynamics_jac=dynamics_jac, dynamics_hess=dynamics_hess,
        running_cost=running_cost, running_cost_grad=running_cost_grad,
        running_cost_hess=running_cost_hess,
        terminal_cost=lambda x: float(phi_fn(one(x), 1)[0, 0]),
        terminal_cost_grad=lambda x: dphi_fn(one(x), 1)[0],
        terminal_cost_hess=lambda x: d2phi_fn(one(x), 1)[0].reshape(n, n),
        **kwargs,
    )


# -- Example 1: scalar problem with an analytic solution ---------------------------

EXAMPLE1_RATE = 2.5
EXAMPLE1_TF = 2.0


@lru_cache(maxsize=None)
def example1() -> OcpProblem:
    """min -y(2) with y' = 5/2 (-y + y u - u^2), y(0) = 1."""
    y, u = sympy.symbols("y u")
    a = sympy.Rational(5, 2)
    return symbolic_problem(
        [y], [u], [a * (-y + y * u - u**2)], 0, -y,
        initial_state=np.array([1.0]),
        horizon=Horizon.fixed(0.0, EXAMPLE1_TF),
        name="example1",
    )


class Example1Reference:
    """Closed-form optimal solution.

    Stationarity in u gives u = y/2, which leaves the Bernoulli equation
    y' = a(-y + y^2/4); with z = 1/y it is linear and
    y(t) = 4 / (1 + 3 e^{a t}). The costate solves
    lambda' = -a lambda (u - 1) with lambda(2) = -1.
    """

    a = EXAMPLE1_RATE
    tf = EXAMPLE1_TF

    def state(self, t):
        t = np.asarray(t, dtype=float)
        return (4.0 / (1.0 + 3.0 * np.exp(self.a * t)))[..., None]

    def control(self, t):
        return 0.5 * self.state(t)

    def costate(self, t):
        t = np.asarray(t, dtype=float)
        a, tf = self.a, self.tf
        ratio = (1.0 + 3.0 * np.exp(a * t)) / (1.0 + 3.0 * np.exp(a * tf))
        return (-np.exp(a * (tf - t)) * ratio**2)[..., None]

    @property
    def objective(self) -> float:
        return -float(self.state(self.tf)[0])

    def hamiltonian(self, t):
        y, u, lam = self.state(t)[..., 0], self.control(t)[..., 0], self.costate(t)[..., 0]
        return lam * self.a * (-y + y * u - u**2)


class Example1OdeReference(Example1Reference):
    """The same solution from high-accuracy integration of the reduced ODEs.

    The state runs forward from y(0) = 1, the costate backward from
    lambda(2) = -1, both with DOP853 at 1e-13 relative tolerance.
    """

    def __init__(self, rtol=1e-13, atol=1e-15):
        a = self.a

        def state_rhs(t, y):
            return a * (-y + y * y / 4.0)

        self._fwd = solve_ivp(state_rhs, (0.0, self.tf), [1.0], method="DOP853",
                              rtol=rtol, atol=atol, dense_output=True)

        def costate_rhs(t, lam):
            yt = self._fwd.sol(t)[0]
            return -a * lam * (yt / 2.0 - 1.0)

        self._bwd = solve_ivp(costate_rhs, (self.tf, 0.0), [-1.0], method="DOP853",
                              rtol=rtol, atol=atol, dense_output=True)

    def state(self, t):
        t = np.asarray(t, dtype=float)
        return self._fwd.sol(t).T.reshape(t.shape + (1,))

    def costate(self, t):
        t = np.asarray(t, dtype=float)
        return self._bwd.sol(t).T.reshape(t.shape + (1,))


def reference_example1() -> Example1Reference:
    return Example1Reference()


# -- Example 2: planar low-thrust orbit raising in equinoctial elements ------------

def example2_time_guess(revolutions: float) -> float:
    """Transfer time if p grew linearly in true longitude on circular orbits."""
    mu = mu_canonical()
    p0, p1 = P0_KM / EARTH_RADIUS_KM, PF_KM / EARTH_RADIUS_KM
    L = 2.0 * np.pi * revolutions
    return L * (p1**2.5 - p0**2.5) / (2.5 * (p1 - p0) * np.sqrt(mu))


def example2_builder(revolutions: float = 5.0) -> OcpProblem:
    """Minimum-energy transfer from p = 9128 km to GEO over ``revolutions`` turns.

    States [p, f, g, l], controls [a_r, a_t]; length unit Earth radius,
    time unit one day; final time free. ``revolutions = 125`` gives
    l(T) = 250 pi.
    """
    if revolutions <= 0:
        raise ValueError("revolutions must be positive")
    return _example2(float(revolutions))


@lru_cache(maxsize=None)
def _example2(revolutions: float) -> OcpProblem:
    p, f, g, l, ar, at = sympy.symbols("p f g l a_r a_t")
    mu = sympy.Float(mu_canonical(), 17)
    w = 1 + f * sympy.cos(l) + g * sympy.sin(l)
    s = sympy.sqrt(p / mu)
    rates = [
        2 * p * at / w * s,
        s * (ar * sympy.sin(l) + ((w + 1) * sympy.cos(l) + f) * at / w),
        s * (-ar * sympy.cos(l) + ((w + 1) * sympy.sin(l) + g) * at / w),
        sympy.sqrt(mu * p) * (w / p) ** 2,
    ]
    p0 = P0_KM / EARTH_RADIUS_KM
    pf = PF_KM / EARTH_RADIUS_KM
    lf = 2.0 * np.pi * revolutions
    T_guess = example2_time_guess(revolutions)
    return symbolic_problem(
        [p, f, g, l], [ar, at], rates, ar**2 + at**2, 0,
        initial_state=np.array([p0, 0.0, 0.0, 0.0]),
        horizon=Horizon.free_final(T_guess, lower_bound=1e-3 * T_guess),
        terminal_constraints=((0, pf), (1, 0.0), (2, 0.0), (3, lf)),
        name=f"example2-{revolutions:g}rev",
    )


@lru_cache(maxsize=None)
def example2_reference(revolutions: float = 5.0, m_intervals: int = 40, n_points: int = 9):
    """Fine LGL integral solve used as the reference for coarser runs."""
    from .solve import solution_reference
    from .transcription import Mesh
    return solution_reference(example2_builder(revolutions), Mesh(m_intervals, n_points), "lgl-int")


@dataclass(frozen=True)
class ProblemRegistryEntry:
    name: str
    builder: Callable[[], OcpProblem]
    default_m: int
    default_n: int
    default_scheme: str
    reference: Optional[Callable] = None
    description: str = ""


def _registry():
    return {
        "example1": ProblemRegistryEntry(
            "example1", example1, 1, 20, "lgl-int", reference=reference_example1,
            description="scalar problem with closed-form solution"),
        "example2-scaled": ProblemRegistryEntry(
            "example2-scaled", lambda: example2_builder(5.0), 40, 3, "lgl-int",
            reference=lambda: example2_reference(5.0, 40),
            description="low-thrust transfer, l(T) = 10 pi"),
        "example2-full": ProblemRegistryEntry(
            "example2-full", lambda: example2_builder(125.0), 888, 3, "lgl-int",
            description="low-thrust transfer, l(T) = 250 pi (hours-scale, no reference)"),
    }


REGISTRY = _registry()


def get_problem(name: str) -> ProblemRegistryEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
