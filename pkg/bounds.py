#!/usr/bin/env python3
"""
Estimation bounds under the true NF model and under a misspecified FF model.

Pipeline for one source position:
  truth μ (SWM+SNS) → FIM → PEB
  μ → pseudo-true FF parameters (grid + damped Gauss-Newton) → MCRLB (A, B)
    → mismatched position bound (incl. bias) → MME in dB

Observations are complex Gaussian with deterministic mean and known σ².
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple
import numpy as np
from scipy import linalg
from config import Config, logger
from errors import InvalidArgumentError, NumericalFailureError
from array_geometry import ArrayGeometry, OfdmGrid, aperture
from wavefront_models import (
    NfParams, FfParams, NF_LABELS, FF_LABELS,
    nf_response, ff_unit_response, ff_jacobian_raw, ff_position, response_jacobian,
)


# ─────────────────────────────────────────────
# FISHER INFORMATION
# ─────────────────────────────────────────────

def equilibrated_inverse(matrix: np.ndarray, what: str = 'matrix') -> np.ndarray:
    """Inverse of D·S·D with S = D⁻¹MD⁻¹, D = sqrt|diag M|; condition checked on S."""
    m = np.asarray(matrix, dtype=float)
    d = np.sqrt(np.abs(np.diag(m)))
    if np.any(d == 0) or not np.all(np.isfinite(m)):
        raise NumericalFailureError(f"{what} is singular (zero or non-finite diagonal)")
    scaled = m / np.outer(d, d)
    cond = np.linalg.cond(scaled)
    if not np.isfinite(cond) or cond > Config.MAX_CONDITION:
        raise NumericalFailureError(f"{what} is ill-conditioned (equilibrated condition {cond:.3e})")
    try:
        inv = linalg.solve(scaled, np.eye(m.shape[0]))
    except linalg.LinAlgError as e:
        raise NumericalFailureError(f"{what} solve failed: {e}") from e
    return inv / np.outer(d, d)


@dataclass(frozen=True, eq=False)
class FimMatrix:
    """Real symmetric Fisher information over a labelled parameter ordering."""

    matrix: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidArgumentError(f"FIM must be square, got shape {m.shape}")
        if self.labels and len(self.labels) != m.shape[0]:
            raise InvalidArgumentError("FIM labels do not match its dimension")
        object.__setattr__(self, 'matrix', 0.5 * (m + m.T))

    def inverse(self) -> np.ndarray:
        return equilibrated_inverse(self.matrix, 'FIM')

    def index(self, label: str) -> int:
        return self.labels.index(label)


def fim(jacobian: np.ndarray, sigma2: float, labels: Sequence[str] = ()) -> FimMatrix:
    """FIM[i,j] = (2/σ²)·Σ Re{conj(∂μ/∂η_i)·∂μ/∂η_j}."""
    if not sigma2 > 0:
        raise InvalidArgumentError(f"noise power must be > 0, got {sigma2}")
    j = np.asarray(jacobian, dtype=complex)
    j = j.reshape(j.shape[0], -1)
    return FimMatrix((2.0 / sigma2) * np.real(j.conj() @ j.T), tuple(labels))


def peb(fim_matrix, position_indices: Sequence[int] = (0, 1)) -> float:
    """sqrt(trace of the position block of FIM⁻¹)."""
    if not isinstance(fim_matrix, FimMatrix):
        fim_matrix = FimMatrix(fim_matrix)
    ix = np.asarray(position_indices)
    crlb = fim_matrix.inverse()
    return float(np.sqrt(np.trace(crlb[np.ix_(ix, ix)])))


# ─────────────────────────────────────────────
# DAMPED GAUSS-NEWTON
# ─────────────────────────────────────────────

@dataclass
class LeastSquaresResult:
    x: np.ndarray
    cost: float
    gradient_norm: float
    iterations: int
    converged: bool
    stalled: bool = False
    history: List[float] = field(default_factory=list)


def _stack_real(values: np.ndarray) -> np.ndarray:
    flat = np.ravel(values)
    return np.concatenate([flat.real, flat.imag])


def _stalled(x, cost, grad_norm, it, ref, history) -> LeastSquaresResult:
    # no acceptable step left; only a near-stationary point counts as converged
    converged = grad_norm <= Config.STALL_GRADIENT_TOL * ref
    if not converged:
        logger.debug(f"solver stalled at it={it} with gradient {grad_norm / ref:.3e} (rel)")
    return LeastSquaresResult(x, cost, grad_norm, it, converged, stalled=True, history=history)


def damped_gauss_newton(model: Callable[[np.ndarray], np.ndarray],
                        jacobian: Callable[[np.ndarray], np.ndarray],
                        target: np.ndarray,
                        x0: np.ndarray,
                        feasible: Optional[Callable[[np.ndarray], bool]] = None,
                        max_iterations: int = Config.MAX_ITERATIONS) -> LeastSquaresResult:
    """
    Levenberg-Marquardt on ‖target − model(x)‖² for a complex model with
    real parameters. `jacobian(x)` returns one complex slab per parameter.

    Columns are scaled to unit norm before damping, so the tolerances are
    relative to ‖target‖ and independent of parameter units. A step is only
    accepted if it keeps x feasible and does not raise the cost.
    """
    target = np.asarray(target, dtype=complex)
    ref = max(float(np.linalg.norm(target)), np.finfo(float).tiny)
    x = np.asarray(x0, dtype=float).copy()
    r = _stack_real(target - model(x))
    cost = float(r @ r)
    history = [cost]
    damping = 1e-3
    grad_norm = np.inf

    for it in range(1, max_iterations + 1):
        jc = np.asarray(jacobian(x), dtype=complex).reshape(x.size, -1)
        jr = np.vstack([jc.real.T, jc.imag.T])
        scale = np.linalg.norm(jr, axis=0)
        scale[scale == 0] = 1.0
        js = jr / scale
        grad_norm = float(np.linalg.norm(js.T @ r))
        if grad_norm <= Config.GRADIENT_TOL * ref:
            return LeastSquaresResult(x, cost, grad_norm, it, True, history=history)

        while True:
            lhs = np.vstack([js, np.sqrt(damping) * np.eye(x.size)])
            rhs = np.concatenate([r, np.zeros(x.size)])
            step_s = linalg.lstsq(lhs, rhs)[0]
            if np.linalg.norm(step_s) <= Config.STEP_TOL * ref:
                return _stalled(x, cost, grad_norm, it, ref, history)
            x_new = x + step_s / scale
            if feasible is None or feasible(x_new):
                r_new = _stack_real(target - model(x_new))
                cost_new = float(r_new @ r_new)
                if cost_new <= cost:
                    x, r, cost = x_new, r_new, cost_new
                    history.append(cost)
                    damping = max(damping / 3.0, 1e-15)
                    break
            damping *= 4.0
            if damping > Config.MAX_DAMPING:
                return _stalled(x, cost, grad_norm, it, ref, history)

    return LeastSquaresResult(x, cost, grad_norm, max_iterations, False, history=history)


# ─────────────────────────────────────────────
# PSEUDO-TRUE FF PARAMETERS
# ─────────────────────────────────────────────

def _theta_count(geom: ArrayGeometry, grid: OfdmGrid, n_theta: Optional[int]) -> int:
    if n_theta:
        return n_theta
    lobe = int(np.ceil(4 * np.pi * aperture(geom) / grid.wavelengths.min()))
    return max(Config.INIT_N_THETA, lobe)


def _open_theta_grid(n: int) -> np.ndarray:
    return np.linspace(-np.pi / 2, np.pi / 2, n + 2)[1:-1]


@dataclass(frozen=True, eq=False)
class InitGridSpec:
    """Coarse (θ, τ) grid used to seed the pseudo-true refinement."""

    thetas: np.ndarray
    taus: np.ndarray

    def __post_init__(self):
        if len(self.thetas) < 1 or len(self.taus) < 1:
            raise InvalidArgumentError("init grid needs at least one θ and one τ")
        if np.any(np.abs(self.thetas) >= np.pi / 2) or np.any(np.asarray(self.taus) <= 0):
            raise InvalidArgumentError("init grid must lie inside θ ∈ (−π/2, π/2), τ > 0")

    @classmethod
    def for_range(cls, geom: ArrayGeometry, grid: OfdmGrid, d_max_m: float,
                  n_theta: Optional[int] = None, n_tau: int = Config.INIT_N_TAU) -> 'InitGridSpec':
        """τ over [0.2·d/c, 5·d/c] for candidate ranges up to d_max_m."""
        if not d_max_m > 0:
            raise InvalidArgumentError(f"d_max_m must be > 0, got {d_max_m}")
        c = Config.SPEED_OF_LIGHT
        return cls(_open_theta_grid(_theta_count(geom, grid, n_theta)),
                   np.linspace(0.2 * d_max_m / c, 5.0 * d_max_m / c, n_tau))

    @classmethod
    def around_delay(cls, geom: ArrayGeometry, grid: OfdmGrid, tau_hint: float,
                     n_theta: Optional[int] = None, n_tau: int = Config.INIT_N_TAU) -> 'InitGridSpec':
        """One unambiguous delay period K/B centred on tau_hint (the local KL minimiser window)."""
        if not tau_hint > 0:
            raise InvalidArgumentError(f"tau_hint must be > 0, got {tau_hint}")
        period = grid.unambiguous_delay_s
        if np.isinf(period):
            taus = np.array([tau_hint])
        else:
            taus = tau_hint + (np.arange(n_tau) / n_tau - 0.5) * period
            taus = taus[taus > 0]
        return cls(_open_theta_grid(_theta_count(geom, grid, n_theta)), taus)


@dataclass(frozen=True, eq=False)
class PseudoTrueResult:
    params: FfParams
    residual: float
    delta: np.ndarray
    iterations: int
    gradient_norm: float
    restarts: int = 0
    history: Tuple[float, ...] = ()


def grid_correlation(true_mean: np.ndarray, geom: ArrayGeometry, grid: OfdmGrid,
                     spec: InitGridSpec) -> np.ndarray:
    """Z[t,s] = a(θ_t, τ_s)ᴴμ for the unit-gain planar response a."""
    f = grid.frequencies
    offsets = geom.elements - geom.centroid
    proj = offsets @ np.vstack([np.cos(spec.thetas), np.sin(spec.thetas)])          # N × T
    planar = np.exp(2j * np.pi * proj[:, :, None] * f[None, None, :] / Config.SPEED_OF_LIGHT)
    per_carrier = np.einsum('ntk,nk->tk', planar.conj(), true_mean)
    return per_carrier @ np.exp(2j * np.pi * np.outer(f, spec.taus))


def _grid_seeds(z: np.ndarray, count: int) -> List[Tuple[int, int]]:
    """Best cells by |Z|, no two adjacent in (θ, τ) index."""
    order = np.argsort(-np.abs(z), axis=None)
    seeds: List[Tuple[int, int]] = []
    for flat in order[:max(10000, count)]:
        t, s = np.unravel_index(flat, z.shape)
        if all(abs(t - a) > 1 or abs(s - b) > 1 for a, b in seeds):
            seeds.append((int(t), int(s)))
            if len(seeds) == count:
                break
    return seeds


def _ff_feasible(x: np.ndarray) -> bool:
    return bool(-np.pi / 2 < x[0] < np.pi / 2 and x[1] > 0)


def pseudo_true(true_mean: np.ndarray, geom: ArrayGeometry, grid: OfdmGrid,
                init_spec: InitGridSpec) -> PseudoTrueResult:
    """FF parameters minimizing Σ_k ‖μ_k − μ̃_k(η̃)‖² (the KL minimiser for equal covariances)."""
    mu = np.asarray(true_mean, dtype=complex)
    if mu.shape != (geom.n_elements, grid.n_subcarriers):
        raise InvalidArgumentError(f"true mean shape {mu.shape} does not match geometry and grid")
    energy = float(np.sum(np.abs(mu) ** 2))
    if energy == 0:
        raise InvalidArgumentError("true mean is identically zero")

    z = grid_correlation(mu, geom, grid, init_spec)
    n_cells = mu.size
    model = lambda x: ff_unit_response(geom, grid, x[0], x[1]) * complex(x[2], x[3])
    jac = lambda x: ff_jacobian_raw(geom, grid, x)

    for attempt, (t, s) in enumerate(_grid_seeds(z, Config.MAX_RESTARTS + 1)):
        gain = z[t, s] / n_cells
        x0 = np.array([init_spec.thetas[t], init_spec.taus[s], gain.real, gain.imag])
        fit = damped_gauss_newton(model, jac, mu, x0, feasible=_ff_feasible)
        if fit.converged:
            params = FfParams.from_vector(fit.x)
            logger.debug(f"pseudo-true θ={np.degrees(params.theta):.4f}° τ={params.tau:.6e}s "
                         f"residual={fit.cost / energy:.3e} (rel) in {fit.iterations} it, restarts={attempt}")
            return PseudoTrueResult(params=params, residual=fit.cost,
                                    delta=mu - model(fit.x), iterations=fit.iterations,
                                    gradient_norm=fit.gradient_norm, restarts=attempt,
                                    history=tuple(fit.history))
        logger.warning(f"pseudo-true refinement did not converge from grid cell ({t}, {s}); restarting")

    raise NumericalFailureError(
        f"pseudo-true fit failed after {Config.MAX_RESTARTS} restarts")


# ─────────────────────────────────────────────
# MISSPECIFIED BOUND
# ─────────────────────────────────────────────

def ff_hessian(geom: ArrayGeometry, grid: OfdmGrid, eta: np.ndarray) -> np.ndarray:
    """Second derivatives H[i,j] of the FF response by central differences of the analytic Jacobian."""
    eta = np.asarray(eta, dtype=float)
    jac = ff_jacobian_raw(geom, grid, eta)
    mean_norm = np.linalg.norm(ff_unit_response(geom, grid, eta[0], eta[1])) * abs(complex(eta[2], eta[3]))
    hess = np.empty((eta.size,) + jac.shape, dtype=complex)
    for j in range(eta.size):
        h = Config.FD_REL_STEP * mean_norm / np.linalg.norm(jac[j])
        e = np.zeros(eta.size)
        e[j] = h
        hess[:, j] = (ff_jacobian_raw(geom, grid, eta + e) - ff_jacobian_raw(geom, grid, eta - e)) / (2 * h)
    return 0.5 * (hess + hess.transpose(1, 0, 2, 3))


def mcrlb(true_mean: np.ndarray, geom: ArrayGeometry, grid: OfdmGrid, eta0: FfParams,
          delta: np.ndarray, sigma2: float) -> Tuple[np.ndarray, np.ndarray]:
    """MCRLB matrices A and B at the pseudo-true point; the bound is A⁻¹BA⁻¹."""
    if not sigma2 > 0:
        raise InvalidArgumentError(f"noise power must be > 0, got {sigma2}")
    eta = eta0.as_vector()
    n = eta.size
    jac = ff_jacobian_raw(geom, grid, eta).reshape(n, -1)
    hess = ff_hessian(geom, grid, eta).reshape(n, n, -1)
    d = np.ravel(np.asarray(delta, dtype=complex))
    if d.size != jac.shape[1]:
        raise InvalidArgumentError("mismatch vector does not match the response size")

    gram = np.real(jac.conj() @ jac.T)
    a = (2.0 / sigma2) * (np.real(hess.conj() @ d) - gram)
    u = np.real(jac.conj() @ d)
    b = (4.0 / sigma2 ** 2) * np.outer(u, u) + (2.0 / sigma2) * gram
    a = 0.5 * (a + a.T)
    equilibrated_inverse(a, 'MCRLB matrix A')
    return a, 0.5 * (b + b.T)


def misspecified_covariance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a_inv = equilibrated_inverse(a, 'MCRLB matrix A')
    cov = a_inv @ b @ a_inv
    return 0.5 * (cov + cov.T)


def position_bias(eta0: FfParams, p_true, origin=(0.0, 0.0)) -> float:
    """‖p̃(η̃₀) − p_true‖ with p̃ measured from the array centroid `origin`."""
    point, _ = ff_position(eta0)
    return float(np.linalg.norm(point + np.asarray(origin, dtype=float) - np.asarray(p_true, dtype=float)))


def mismatched_position_bound(a: np.ndarray, b: np.ndarray, eta0: FfParams, p_true,
                              origin=(0.0, 0.0)) -> float:
    """sqrt(trace(T·[A⁻¹BA⁻¹]_(θ,τ)·Tᵀ) + bias²)."""
    cov = misspecified_covariance(a, b)[:2, :2]
    _, t = ff_position(eta0)
    variance = float(np.trace(t @ cov @ t.T))
    bias = position_bias(eta0, p_true, origin)
    return float(np.sqrt(max(variance, 0.0) + bias * bias))


def ff_position_bound(fim_ff, ff_params: FfParams) -> float:
    """Position CRLB of the FF model: sqrt(trace(T·[FIM⁻¹]_(θ,τ)·Tᵀ))."""
    if not isinstance(fim_ff, FimMatrix):
        fim_ff = FimMatrix(fim_ff)
    crlb = fim_ff.inverse()[:2, :2]
    _, t = ff_position(ff_params)
    return float(np.sqrt(np.trace(t @ crlb @ t.T)))


def mme(lb_mm: float, peb_m: float) -> float:
    """10·log10(|lb − peb|/peb) with a −60 dB floor."""
    if not peb_m > 0:
        raise InvalidArgumentError(f"PEB must be > 0, got {peb_m}")
    ratio = abs(lb_mm - peb_m) / peb_m
    if ratio <= 10 ** (Config.MISMATCH_FLOOR_DB / 10):
        return Config.MISMATCH_FLOOR_DB
    return float(10 * np.log10(ratio))


# ─────────────────────────────────────────────
# PER-POINT PIPELINE
# ─────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class BoundReport:
    peb: float
    lb_mm: float
    bias_m: float
    mme_db: float
    pseudo_true: Optional[PseudoTrueResult] = None

    def __post_init__(self):
        if not (self.peb > 0 and self.lb_mm > 0 and self.bias_m >= 0):
            raise NumericalFailureError(
                f"invalid bound report (peb={self.peb}, lb_mm={self.lb_mm}, bias={self.bias_m})")


def evaluate_bound_report(geom: ArrayGeometry, grid: OfdmGrid, sigma2: float, nf_params: NfParams,
                          init_spec: Optional[InitGridSpec] = None, sns: bool = True) -> BoundReport:
    """Truth → PEB → pseudo-true → MCRLB → mismatched bound → MME for one source position."""
    mu = nf_response(geom, grid, nf_params, sns=sns)
    f_nf = fim(response_jacobian('nf', geom, grid, nf_params, sns=sns), sigma2, NF_LABELS)
    peb_m = peb(f_nf, (f_nf.index('x'), f_nf.index('y')))

    if init_spec is None:
        d0 = float(np.linalg.norm(nf_params.position - geom.centroid))
        init_spec = InitGridSpec.around_delay(geom, grid, d0 / Config.SPEED_OF_LIGHT)
    pt = pseudo_true(mu, geom, grid, init_spec)
    a, b = mcrlb(mu, geom, grid, pt.params, pt.delta, sigma2)
    lb = mismatched_position_bound(a, b, pt.params, nf_params.position, geom.centroid)
    bias = position_bias(pt.params, nf_params.position, geom.centroid)
    return BoundReport(peb=peb_m, lb_mm=lb, bias_m=bias, mme_db=mme(lb, peb_m), pseudo_true=pt)


def ff_fim(geom: ArrayGeometry, grid: OfdmGrid, params: FfParams, sigma2: float) -> FimMatrix:
    return fim(response_jacobian('ff', geom, grid, params), sigma2, FF_LABELS)
