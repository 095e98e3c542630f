"""Dense operator algebra on a truncated Fock space.

All energies, rates and detunings are in meV with hbar = 1; laser power is
carried in microwatts as metadata only.  Operators are plain complex numpy
arrays with entries[m, n] = <m|O|n> on the number states |0> ... |dim-1>.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_FOCK_DIM = 40


@dataclass(frozen=True)
class CollectiveModelParams:
    """Parameters of the driven, damped collective Kerr mode.

    delta       laser-exciton detuning (meV); the resonance sits at +delta
                in the rotating frame of the laser.
    rabi        collective drive amplitude (meV), real and nonnegative.
    kerr        collective Kerr strength (meV).
    gamma       radiative decay rate (meV), strictly positive.
    laser_power optional pump power in microwatts; used only by the
                superfluorescence ratio test.
    fock_dim    Fock truncation D (number states |0> ... |D-1|).
    """

    delta: float
    rabi: float
    kerr: float
    gamma: float
    laser_power: float | None = None
    fock_dim: int = DEFAULT_FOCK_DIM

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.rabi < 0:
            raise ValueError(f"rabi must be >= 0, got {self.rabi}")
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")
        for name in ("delta", "kerr", "gamma", "rabi"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def annihilation(dim):
    """Annihilation operator on a dim-dimensional Fock space.

    a|n> = sqrt(n)|n-1>, i.e. entries[n-1, n] = sqrt(n).
    """
    if int(dim) != dim or dim < 2:
        raise ValueError(f"Fock dimension must be an integer >= 2, got {dim}")
    dim = int(dim)
    a = np.zeros((dim, dim), dtype=complex)
    n = np.arange(1, dim)
    a[n - 1, n] = np.sqrt(n)
    return a


def creation(dim):
    """Creation operator, the conjugate transpose of annihilation(dim)."""
    return annihilation(dim).conj().T


def number_operator(dim):
    """Diagonal occupation-number operator diag(0, 1, ..., dim-1)."""
    if int(dim) != dim or dim < 2:
        raise ValueError(f"Fock dimension must be an integer >= 2, got {dim}")
    return np.diag(np.arange(int(dim), dtype=float)).astype(complex)


def hamiltonian(params):
    """Rotating-frame Hamiltonian of the collective mode.

    H = delta * a^ a + rabi * (a + a^) + kerr * a^ a^ a a

    The diagonal is n*delta + n(n-1)*kerr and the drive couples adjacent
    number states with matrix element rabi*sqrt(n+1).  Hermitian by
    construction for the real drive amplitude enforced on the parameters.
    """
    d = int(params.fock_dim)
    n = np.arange(d, dtype=float)
    h = np.diag(params.delta * n + params.kerr * n * (n - 1)).astype(complex)
    a = annihilation(d)
    h += params.rabi * (a + a.conj().T)
    return h


def expectation(op, rho):
    """Tr[op @ rho] for square matrices of matching dimension."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape or op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: op {op.shape} vs rho {rho.shape}")
    return complex(np.einsum("ij,ji->", op, rho))


def coherent_state(alpha, dim):
    """Truncated coherent-state vector with amplitude alpha.

    Coefficients exp(-|alpha|^2/2) alpha^n / sqrt(n!); not re-normalised, so
    the truncation deficit stays visible to fidelity checks.
    """
    dim = int(dim)
    c = np.zeros(dim, dtype=complex)
    c[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    return c
