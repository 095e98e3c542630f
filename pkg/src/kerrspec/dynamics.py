"""Lindblad generator of the collective mode, steady state and propagation.

Vectorisation convention (fixed everywhere in this package): density
matrices are stacked column by column,

    vec(rho)[i + j*D] = rho[i, j]

so left multiplication X @ rho becomes kron(I, X) acting on vec(rho) and
right multiplication rho @ X becomes kron(X.T, I).  The trace functional is
the row vector with ones at the stacked diagonal positions i*(D+1).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .errors import DegenerateSteadyStateError, TruncationConvergenceError
from .fock import CollectiveModelParams, annihilation, hamiltonian

# Dense matrix exponentials are used up to this superoperator dimension
# (D*D); larger propagations fall back to an adaptive ODE integrator.
DENSE_EXPM_LIMIT = 3600
# Dense LU for steady states up to this superoperator dimension.
DENSE_SOLVE_LIMIT = 2500

TRUNCATION_SCHEDULE_START = 16
TRUNCATION_SCHEDULE_STEP = 4
TRUNCATION_MAX_DIM = 200


@dataclass(frozen=True)
class Liouvillian:
    """Dense generator acting on column-stacked density matrices."""

    dim: int
    generator: np.ndarray
    params: CollectiveModelParams


def vec(rho):
    """Column-stack a D x D matrix into a vector of length D*D."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(x, dim):
    """Inverse of vec()."""
    return np.asarray(x).reshape((dim, dim), order="F")


def trace_vector(dim):
    """Row vector t with t @ vec(rho) = Tr[rho]."""
    t = np.zeros(dim * dim, dtype=complex)
    t[:: dim + 1] = 1.0
    return t


def build_liouvillian(params):
    """Generator of

        d(rho)/dt = -i[H, rho] + (gamma/2) (2 a rho a^ - a^ a rho - rho a^ a)

    as a dense (D*D) x (D*D) matrix under the column-stacking convention.
    """
    d = int(params.fock_dim)
    a = annihilation(d)
    h = hamiltonian(params)
    n_op = a.conj().T @ a
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    gen += 0.5 * params.gamma * (
        2.0 * np.kron(a.conj(), a)
        - np.kron(eye, n_op)
        - np.kron(n_op.T, eye)
    )
    return Liouvillian(dim=d, generator=gen, params=params)


def _liouvillian_sparse(params):
    """Sparse twin of build_liouvillian, for large truncations only."""
    d = int(params.fock_dim)
    a = sp.csr_matrix(annihilation(d))
    h = sp.csr_matrix(hamiltonian(params))
    n_op = (a.conj().T @ a).tocsr()
    eye = sp.identity(d, dtype=complex, format="csr")
    gen = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    gen = gen + 0.5 * params.gamma * (
        2.0 * sp.kron(a.conj(), a)
        - sp.kron(eye, n_op)
        - sp.kron(n_op.T, eye)
    )
    return gen.tocsr()


def validate_density_matrix(rho, *, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-8):
    """Raise RuntimeError unless rho is Hermitian, unit trace and PSD.

    The positivity floor is -psd_tol on the smallest eigenvalue; finite
    truncation produces harmless negativity at that level.
    """
    rho = np.asarray(rho)
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise RuntimeError(f"state not Hermitian: max |rho - rho^| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise RuntimeError(f"state trace deviates from 1 by {abs(tr - 1.0):.3e}")
    lam_min = float(sla.eigvalsh(rho)[0])
    if lam_min < -psd_tol:
        raise RuntimeError(f"state not positive: smallest eigenvalue {lam_min:.3e}")


def _solve_trace_replaced(gen, dim):
    """Solve gen @ x = 0 with row 0 replaced by the trace-normalisation row."""
    n = dim * dim
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0
    if sp.issparse(gen):
        m = gen.tolil(copy=True)
        m[0, :] = 0.0
        m[0, :: dim + 1] = 1.0
        return splu(m.tocsc()).solve(b)
    if n <= DENSE_SOLVE_LIMIT:
        m = np.array(gen, dtype=complex)
        m[0, :] = trace_vector(dim)
        return np.linalg.solve(m, b)
    m = sp.lil_matrix(sp.csr_matrix(gen))
    m[0, :] = 0.0
    m[0, :: dim + 1] = 1.0
    return splu(m.tocsc()).solve(b)


def steady_state(L, *, residual_tol=1e-10, psd_tol=1e-8):
    """Stationary density matrix of the generator.

    Solved directly by replacing one redundant row of the generator with the
    trace row.  The result is hermitised, checked against the full generator
    (||L vec(rho)|| < residual_tol) and validated as a density matrix.  A
    residual failure triggers an eigenvalue diagnosis: a multi-dimensional
    null space raises DegenerateSteadyStateError instead of silently picking
    a direction.
    """
    dim = L.dim
    gen = L.generator
    try:
        x = _solve_trace_replaced(gen, dim)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        _diagnose_null_space(gen, dim, context=str(exc))
        raise
    rho = unvec(x, dim)
    rho = 0.5 * (rho + rho.conj().T)
    residual = np.linalg.norm(gen @ vec(rho)) if not sp.issparse(gen) else np.linalg.norm(gen.dot(vec(rho)))
    if residual > residual_tol:
        _diagnose_null_space(gen, dim, context=f"residual {residual:.3e}")
        raise RuntimeError(
            f"steady-state residual {residual:.3e} exceeds {residual_tol:.1e}"
        )
    validate_density_matrix(rho, psd_tol=psd_tol)
    return rho


def _diagnose_null_space(gen, dim, *, context, zero_tol=1e-10):
    """Raise DegenerateSteadyStateError when more than one eigenvalue is ~0."""
    n = dim * dim
    if n > 6400:
        return
    dense = gen.toarray() if sp.issparse(gen) else gen
    lam = np.linalg.eigvals(dense)
    n_zero = int(np.count_nonzero(np.abs(lam) < zero_tol))
    if n_zero > 1:
        raise DegenerateSteadyStateError(
            f"stationary space has dimension {n_zero} (context: {context})"
        )


def propagator(L, t):
    """Dense matrix exp(L t), for superoperator dimensions up to the
    dense-exponential limit."""
    if t < 0:
        raise ValueError(f"propagation time must be >= 0, got {t}")
    n = L.dim * L.dim
    if n > DENSE_EXPM_LIMIT:
        raise ValueError(
            f"dense propagator limited to superoperator dimension {DENSE_EXPM_LIMIT}, got {n}"
        )
    return sla.expm(L.generator * t)


def propagate(L, x, t, *, method="auto"):
    """Apply exp(L t) to a D x D matrix x.

    Uses the dense matrix exponential up to superoperator dimension 3600 and
    an adaptive ODE integrator (relative tolerance 1e-10) above it; method
    may be forced to "expm" or "ode".
    """
    if t < 0:
        raise ValueError(f"propagation time must be >= 0, got {t}")
    x = np.asarray(x, dtype=complex)
    if x.shape != (L.dim, L.dim):
        raise ValueError(f"expected shape {(L.dim, L.dim)}, got {x.shape}")
    if t == 0:
        return x.copy()
    n = L.dim * L.dim
    if method == "auto":
        method = "expm" if n <= DENSE_EXPM_LIMIT else "ode"
    xv = vec(x)
    if method == "expm":
        yv = sla.expm(L.generator * t) @ xv
    elif method == "ode":
        gen = L.generator
        sol = solve_ivp(
            lambda _, y: gen @ y,
            (0.0, t),
            xv,
            method="DOP853",
            rtol=1e-10,
            atol=1e-13 * max(1.0, float(np.abs(xv).max())),
            t_eval=[t],
        )
        if not sol.success:
            raise RuntimeError(f"propagation integrator failed: {sol.message}")
        yv = sol.y[:, -1]
    else:
        raise ValueError(f"unknown propagation method {method!r}")
    return unvec(yv, L.dim)


@dataclass(frozen=True)
class TruncationReport:
    """Occupation and top-level tail population along a truncation schedule."""

    dims: tuple
    occupations: tuple
    tails: tuple
    tol: float
    converged_dim: int | None


def _occupation_and_tail(params, dim):
    """Steady-state <a^ a> and population of the top four Fock levels at a
    given truncation; (nan, nan) when the solve fails."""
    p = CollectiveModelParams(
        delta=params.delta,
        rabi=params.rabi,
        kerr=params.kerr,
        gamma=params.gamma,
        laser_power=params.laser_power,
        fock_dim=dim,
    )
    n = dim * dim
    gen = _liouvillian_sparse(p) if n > DENSE_SOLVE_LIMIT else build_liouvillian(p).generator
    try:
        x = _solve_trace_replaced(gen, dim)
    except (np.linalg.LinAlgError, RuntimeError):
        return np.nan, np.nan
    rho = unvec(x, dim)
    rho = 0.5 * (rho + rho.conj().T)
    pops = np.real(np.diag(rho))
    occ = float(np.arange(dim) @ pops)
    tail = float(pops[max(dim - 4, 0):].sum())
    return occ, tail


def truncation_scan(params, dims):
    """Evaluate occupation and tail population over a list of truncations."""
    occs, tails = [], []
    for d in dims:
        occ, tail = _occupation_and_tail(params, int(d))
        occs.append(occ)
        tails.append(tail)
    return TruncationReport(
        dims=tuple(int(d) for d in dims),
        occupations=tuple(occs),
        tails=tuple(tails),
        tol=np.nan,
        converged_dim=None,
    )


def _rel_change(a, b):
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(b - a) / scale


def converge_truncation(
    params,
    tol,
    *,
    start=TRUNCATION_SCHEDULE_START,
    step=TRUNCATION_SCHEDULE_STEP,
    max_dim=TRUNCATION_MAX_DIM,
):
    """Smallest truncation D in the schedule start, start+step, ... such that
    the steady-state occupation and the top-level tail population move by
    less than tol when D grows to D + 8.

    Returns (D, TruncationReport).  Raises TruncationConvergenceError with
    the partial report when nothing converges by max_dim; that usually means
    an unstable drive-to-damping ratio.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")
    if step <= 0 or start < 2:
        raise ValueError("schedule must have start >= 2 and step > 0")
    values = {}
    dims_order = []
    d = start
    while d <= max_dim:
        values[d] = _occupation_and_tail(params, d)
        dims_order.append(d)
        candidate = d - 8
        if candidate >= start and candidate in values:
            occ_a, tail_a = values[candidate]
            occ_b, tail_b = values[d]
            finite = all(np.isfinite(v) for v in (occ_a, tail_a, occ_b, tail_b))
            if (
                finite
                and _rel_change(occ_a, occ_b) < tol
                and abs(tail_b - tail_a) < tol
            ):
                report = TruncationReport(
                    dims=tuple(dims_order),
                    occupations=tuple(values[k][0] for k in dims_order),
                    tails=tuple(values[k][1] for k in dims_order),
                    tol=tol,
                    converged_dim=candidate,
                )
                return candidate, report
        d += step
    report = TruncationReport(
        dims=tuple(dims_order),
        occupations=tuple(values[k][0] for k in dims_order),
        tails=tuple(values[k][1] for k in dims_order),
        tol=tol,
        converged_dim=None,
    )
    raise TruncationConvergenceError(
        f"no truncation in [{start}, {max_dim}] met tol={tol:g}; "
        "the drive-to-damping ratio may be unstable",
        report=report,
    )
