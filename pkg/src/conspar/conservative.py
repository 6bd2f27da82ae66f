"""Parabolic problems closed by conservation laws instead of boundary data.

A totally conservative problem keeps two linear functionals of the
solution constant in time; this is equivalent to a coupled non-local
boundary value problem whose conservation laws span the kernel of the
operator. This module builds such problems from candidate laws (rejecting
functions outside the kernel), classifies their positivity structure,
reduces general drift-diffusion operators to weighted self-adjoint form,
and handles prescribed moments through a source term and the Duhamel
integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ArgumentError,
    CompatibilityError,
    CouplingError,
    InputError,
    QuadratureError,
)
from .fields import CoefficientField, constant_field, field_from_callable
from .sturm import (
    DEFAULT_GRID,
    EigenSystem,
    Grid,
    SLProblem,
    Trajectory,
    apply_operator,
    assemble,
    coupling_from_kernel,
    make_coupling,
    sample_field,
    weighted_inner,
)

INTRINSICALLY_POSITIVE = "intrinsically_positive"
NONNEGATIVE = "nonnegative"
UNKNOWN = "unknown"


@dataclass(frozen=True, eq=False)
class ConservativeProblem:
    """A conservative problem ready for assembly and eigensolve.

    ``laws`` hold the conserved functionals (two for a totally
    conservative problem, one plus ``extra_bc`` for a partially
    conservative one); ``law_values`` are their samples on ``grid``.
    For partially conservative problems the strong-maximum-principle
    hypothesis behind positivity is assumed, not checked.
    """

    sl: SLProblem
    grid: Grid
    laws: tuple
    law_values: np.ndarray  # (n_laws, n)
    kind: str  # "totally" | "partially"
    positivity: str
    extra_bc: Optional[np.ndarray] = None
    max_principle_assumed: bool = False


def _kernel_residual(p, q, weight, phi, grid: Grid) -> Tuple[float, float]:
    """Max interior residual of L phi and the acceptance threshold."""
    from .sturm import neumann_coupling

    op = assemble(SLProblem(p=p, q=q, weight=weight, coupling=neumann_coupling()), grid)
    phi_v = sample_field(phi, grid)
    resid = apply_operator(op, phi_v) * sample_field(weight, grid)
    resid = float(np.max(np.abs(resid[1:-1])))
    phi_sup = float(np.max(np.abs(phi_v)))
    q_sup = float(np.max(np.abs(sample_field(q, grid))))
    # discretization-aware acceptance: the h^-2 term is the natural size of
    # the stencil applied to a resolved non-kernel direction
    tol = 1e-6 * (1.0 + phi_sup * q_sup + phi_sup / grid.h**2)
    return resid, tol


def _assemble_conservative(p, q, weight, phi1, phi2, grid: Grid) -> ConservativeProblem:
    v1, v2 = sample_field(phi1, grid), sample_field(phi2, grid)
    gram = np.array(
        [
            [np.dot(v1, v1), np.dot(v1, v2)],
            [np.dot(v2, v1), np.dot(v2, v2)],
        ]
    )
    if np.linalg.det(gram) <= 1e-12 * max(gram[0, 0] * gram[1, 1], 1e-300):
        raise CouplingError("conservation laws are numerically proportional")
    coupling = coupling_from_kernel(phi1, phi2, p, grid)
    law_values = np.vstack([v1, v2])
    problem = ConservativeProblem(
        sl=SLProblem(p=p, q=q, weight=weight, coupling=coupling),
        grid=grid,
        laws=(phi1, phi2),
        law_values=law_values,
        kind="totally",
        positivity=UNKNOWN,
    )
    return ConservativeProblem(
        sl=problem.sl,
        grid=grid,
        laws=problem.laws,
        law_values=law_values,
        kind="totally",
        positivity=certify_intrinsic_positivity(problem),
    )


def build_totally_conservative(
    p: CoefficientField,
    q: CoefficientField,
    phi1: CoefficientField,
    phi2: CoefficientField,
    grid: Grid = DEFAULT_GRID,
    weight: Optional[CoefficientField] = None,
    kernel_tol: Optional[float] = None,
) -> ConservativeProblem:
    """Accept two conservation laws and build the coupled problem.

    Each law must satisfy L phi = 0 on the interior nodes up to a
    discretization-aware tolerance; the laws must not be proportional.
    """
    weight = weight if weight is not None else constant_field(1.0)
    for name, phi in (("phi1", phi1), ("phi2", phi2)):
        resid, tol = _kernel_residual(p, q, weight, phi, grid)
        if resid > (kernel_tol if kernel_tol is not None else tol):
            raise InputError(
                f"{name} is not a conservation law: interior kernel residual "
                f"{resid:.3e} exceeds {kernel_tol if kernel_tol is not None else tol:.3e}"
            )
    return _assemble_conservative(p, q, weight, phi1, phi2, grid)


def build_partially_conservative(
    p: CoefficientField,
    q: CoefficientField,
    phi1: CoefficientField,
    extra_bc: Sequence[float],
    grid: Grid = DEFAULT_GRID,
    weight: Optional[CoefficientField] = None,
) -> ConservativeProblem:
    """One conservation law plus a user boundary row.

    The extra row may be any boundary functional independent of the law's
    row; whether the resulting semigroup preserves positivity depends on a
    maximum principle that is recorded as assumed.
    """
    weight = weight if weight is not None else constant_field(1.0)
    resid, tol = _kernel_residual(p, q, weight, phi1, grid)
    if resid > tol:
        raise InputError(
            f"phi1 is not a conservation law: residual {resid:.3e} exceeds {tol:.3e}"
        )
    scale = 1.0 / (grid.b - grid.a)
    va, vb = phi1(0.0), phi1(1.0)
    da, db = phi1.derivative(0.0) * scale, phi1.derivative(1.0) * scale
    pa, pb = p(0.0), p(1.0)
    law_row = [pa * da, -pb * db, -pa * va, pb * vb]
    coupling = make_coupling([law_row, list(extra_bc)])
    v1 = sample_field(phi1, grid)
    positivity = NONNEGATIVE if float(v1.min()) >= -1e-12 else UNKNOWN
    return ConservativeProblem(
        sl=SLProblem(p=p, q=q, weight=weight, coupling=coupling),
        grid=grid,
        laws=(phi1,),
        law_values=v1[None, :],
        kind="partially",
        positivity=positivity,
        extra_bc=np.asarray(extra_bc, dtype=float),
        max_principle_assumed=True,
    )


def certify_intrinsic_positivity(
    problem: ConservativeProblem, directions: int = 720, margin: float = 1e-12
) -> str:
    """Sweep combinations of the two laws for an everywhere-positive one.

    This is a certification heuristic over a finite direction grid, not a
    proof; "unknown" is a legitimate outcome.
    """
    if problem.kind != "totally":
        raise ArgumentError("positivity certification needs a totally conservative problem")
    v1, v2 = problem.law_values
    thetas = np.linspace(0.0, np.pi, directions, endpoint=False)
    for th in thetas:
        combo = np.cos(th) * v1 + np.sin(th) * v2
        sup = float(np.max(np.abs(combo)))
        if float(combo.min()) > margin * max(1.0, sup):
            return INTRINSICALLY_POSITIVE
        if float((-combo).min()) > margin * max(1.0, sup):
            return INTRINSICALLY_POSITIVE
    if float(v1.min()) >= -margin and float(v2.min()) >= -margin:
        return NONNEGATIVE
    return UNKNOWN


def _adjoint_kernel_residual(a, b, c, phi, grid: Grid) -> Tuple[float, float]:
    """Central-difference residual of (a phi)'' - (b phi)' + c phi, the
    formal-adjoint kernel condition a plain-integral conservation law must
    satisfy, with a discretization-aware threshold."""
    x = grid.reference(grid.nodes)
    h = grid.h
    aphi = np.asarray(a(x)) * np.asarray(phi(x))
    bphi = np.asarray(b(x)) * np.asarray(phi(x))
    cphi = np.asarray(c(x)) * np.asarray(phi(x))
    second = (aphi[2:] - 2 * aphi[1:-1] + aphi[:-2]) / h**2
    first = (bphi[2:] - bphi[:-2]) / (2 * h)
    resid = float(np.max(np.abs(second - first + cphi[1:-1])))
    tol = 1e-6 * (
        1.0
        + float(np.max(np.abs(cphi)))
        + float(np.max(np.abs(aphi))) / h**2
        + float(np.max(np.abs(bphi))) / h
    )
    return resid, tol


def selfadjoint_reduction(
    a: CoefficientField,
    b: CoefficientField,
    c: CoefficientField,
    phi1: CoefficientField,
    phi2: CoefficientField,
    grid: Grid = DEFAULT_GRID,
) -> Tuple[ConservativeProblem, CoefficientField]:
    """Rewrite M u = a u'' + b u' + c u with plain-integral laws phi_i as a
    weighted self-adjoint problem.

    With eta = exp(int b/a): p = eta, q = c eta / a, inner-product weight
    eta / a, and the laws transform to (a/eta) phi_i. All downstream inner
    products (conservation checks included) must use the returned weight.
    The laws are validated in plain form against the formal adjoint (the
    transformed laws can carry sharp layers the stencil cannot resolve);
    requires a bounded away from zero, else the degenerate-boundary
    solvers apply.
    """
    from .fields import integrating_factor

    eta = integrating_factor(a, b)  # raises DegeneracyError if min a <= 0
    for name, phi in (("phi1", phi1), ("phi2", phi2)):
        resid, tol = _adjoint_kernel_residual(a, b, c, phi, grid)
        if resid > tol:
            raise InputError(
                f"{name} is not a conservation law of the general operator: "
                f"formal-adjoint residual {resid:.3e} exceeds {tol:.3e}"
            )
    q_fn = lambda x: np.asarray(c(x)) * np.asarray(eta(x)) / np.asarray(a(x))  # noqa: E731
    w_fn = lambda x: np.asarray(eta(x)) / np.asarray(a(x))  # noqa: E731
    q_field = field_from_callable(q_fn, "reduced_q", n=eta.xs.size)
    w_field = field_from_callable(w_fn, "reduced_weight", n=eta.xs.size)

    def transformed(phi):
        fn = lambda x: np.asarray(a(x)) / np.asarray(eta(x)) * np.asarray(phi(x))  # noqa: E731

        def deriv(x):
            ax, ex, px = np.asarray(a(x)), np.asarray(eta(x)), np.asarray(phi(x))
            dax = np.asarray(a.derivative(x))
            dex = np.asarray(eta.derivative(x))
            dpx = np.asarray(phi.derivative(x))
            return (dax / ex - ax * dex / ex**2) * px + ax / ex * dpx

        return field_from_callable(fn, "reduced_law", n=eta.xs.size, derivative=deriv)

    psi1, psi2 = transformed(phi1), transformed(phi2)
    problem = _assemble_conservative(eta, q_field, w_field, psi1, psi2, grid)
    return problem, w_field


def conservation_residual(
    traj: Trajectory, law, weight, grid: Optional[Grid] = None
) -> float:
    """Max relative drift of the weighted law moment along a trajectory."""
    grid = grid if grid is not None else traj.grid
    law_v = sample_field(law, grid) if isinstance(law, CoefficientField) else np.asarray(law)
    w_v = (
        sample_field(weight, grid)
        if isinstance(weight, CoefficientField)
        else np.asarray(weight)
    )
    moments = np.array(
        [weighted_inner(v, law_v, w_v, grid) for v in traj.values]
    )
    m0 = moments[0]
    return float(np.max(np.abs(moments - m0)) / max(1.0, abs(m0)))


# ----------------------------------------------------------------------
# Prescribed moments and the Duhamel integral


@dataclass(frozen=True)
class TimeFunction:
    """A scalar function of time with its derivative available."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]


def time_function(fn: Callable[[float], float], dfn: Optional[Callable] = None) -> TimeFunction:
    """Wrap a callable; derivative defaults to a central difference."""
    if dfn is None:
        def dfn(t, _f=fn):
            h = 1e-6 * max(1.0, abs(t))
            return (_f(t + h) - _f(t - h)) / (2 * h)

    return TimeFunction(value=fn, derivative=dfn)


def orthonormalize_laws(
    law_values: np.ndarray, weight: np.ndarray, grid: Grid
) -> np.ndarray:
    """Gram-Schmidt in the weighted inner product; rows are the laws."""
    out = np.array(law_values, dtype=float)
    for i in range(out.shape[0]):
        for j in range(i):
            out[i] -= weighted_inner(out[i], out[j], weight, grid) * out[j]
        norm = np.sqrt(weighted_inner(out[i], out[i], weight, grid))
        if norm <= 0:
            raise InputError("laws are not independent; cannot orthonormalize")
        out[i] /= norm
    return out


@dataclass(frozen=True, eq=False)
class MomentPrescription:
    """Target moments F_i(t) against orthonormalized laws."""

    F1: TimeFunction
    F2: TimeFunction
    phi1: np.ndarray
    phi2: np.ndarray
    weight: np.ndarray
    grid: Grid


def prescribe_moments(
    problem: ConservativeProblem, F1: TimeFunction, F2: TimeFunction
) -> MomentPrescription:
    """Orthonormalize the problem's laws and attach the two targets."""
    w = sample_field(problem.sl.weight, problem.grid)
    phi = orthonormalize_laws(problem.law_values, w, problem.grid)
    return MomentPrescription(
        F1=F1, F2=F2, phi1=phi[0], phi2=phi[1], weight=w, grid=problem.grid
    )


def prescribed_moments_reduce(
    v0: np.ndarray, pres: MomentPrescription, compat_tol: float = 1e-8
):
    """Split prescribed-moment data into zero-moment data plus a source.

    Returns (w0, G) with w0 = v0 - F1(0) phi1 - F2(0) phi2 (zero moments
    against both laws) and G(t) = F1'(t) phi1 + F2'(t) phi2 evaluable at
    any time. Raises CompatibilityError when F_i(0) does not match the
    initial moments.
    """
    v0 = np.asarray(v0, dtype=float)
    for i, (F, phi) in enumerate(((pres.F1, pres.phi1), (pres.F2, pres.phi2)), start=1):
        m = weighted_inner(v0, phi, pres.weight, pres.grid)
        f0 = F.value(0.0)
        if abs(m - f0) > compat_tol * max(1.0, abs(f0)):
            raise CompatibilityError(
                f"F{i}(0) = {f0} incompatible with initial moment {m}"
            )
    w0 = v0 - pres.F1.value(0.0) * pres.phi1 - pres.F2.value(0.0) * pres.phi2

    def G(t: float) -> np.ndarray:
        return pres.F1.derivative(t) * pres.phi1 + pres.F2.derivative(t) * pres.phi2

    return w0, G


def _mode_convolution(
    eig: EigenSystem, G: Callable, t: float, rtol: float
) -> np.ndarray:
    """int_0^t exp(-lambda (t-s)) <G(s), w_k> ds for every mode, by
    composite Simpson refined by doubling."""
    lam = eig.eigenvalues
    if t == 0.0:
        return np.zeros_like(lam)
    basis = eig.mass[:, None] * eig.vectors  # project all s at once
    k = 2
    prev = None
    while True:
        s = np.linspace(0.0, t, k + 1)
        gs = np.stack([np.asarray(G(float(si)), dtype=float) for si in s])
        coeffs = gs @ basis  # (k+1, modes)
        w = np.ones(k + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        w *= t / (3 * k)
        with np.errstate(under="ignore"):
            kern = np.exp(-np.outer(t - s, lam))
        est = (w[:, None] * kern * coeffs).sum(axis=0)
        if prev is not None and float(np.max(np.abs(est - prev))) <= rtol * max(
            1.0, float(np.max(np.abs(est)))
        ):
            return est
        if k >= 2**14:
            raise QuadratureError("Duhamel time quadrature did not converge")
        prev = est
        k *= 2


def duhamel_evolve(
    eig: EigenSystem,
    w0: np.ndarray,
    G: Callable,
    times: Sequence[float],
    rtol: float = 1e-10,
) -> Trajectory:
    """w(t) = e^{tL} w0 + int_0^t e^{(t-s)L} G(s) ds on the eigenbasis."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ArgumentError("times must be a non-empty list")
    a = eig.project(w0)
    lam = eig.eigenvalues
    values = np.empty((times.size, eig.grid.n))
    for i, t in enumerate(times):
        with np.errstate(under="ignore"):
            coef = a * np.exp(-lam * t) + _mode_convolution(eig, G, float(t), rtol)
        values[i] = eig.vectors @ coef
    return Trajectory(grid=eig.grid, times=times, values=values, weight=eig.weight)


def prescribed_moments_evolve(
    eig: EigenSystem,
    v0: np.ndarray,
    pres: MomentPrescription,
    times: Sequence[float],
) -> Tuple[Trajectory, Trajectory]:
    """Evolve prescribed-moment data; returns (solution, zero-moment part).

    The solution trajectory carries the prescribed moments F_i(t); the
    second trajectory is the solution minus F_i(t) phi_i, whose moments
    vanish identically.
    """
    w0, G = prescribed_moments_reduce(v0, pres)
    base = pres.F1.value(0.0) * pres.phi1 + pres.F2.value(0.0) * pres.phi2
    wt = duhamel_evolve(eig, w0, G, times)
    v_values = wt.values + base[None, :]
    lift = np.stack(
        [
            pres.F1.value(float(t)) * pres.phi1 + pres.F2.value(float(t)) * pres.phi2
            for t in wt.times
        ]
    )
    v_traj = Trajectory(grid=eig.grid, times=wt.times, values=v_values, weight=eig.weight)
    w_traj = Trajectory(
        grid=eig.grid, times=wt.times, values=v_values - lift, weight=eig.weight
    )
    return v_traj, w_traj
