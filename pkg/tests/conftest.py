import numpy as np
import pytest

from kerrspec import CollectiveModelParams

# Strong-Kerr reference parameter set used throughout (meV units).
REF_DELTA = 0.1
REF_RABI = 0.16
REF_KERR = 0.45
REF_GAMMA = 0.22
REF_GAMMA_F = 0.0107

# Measured power series used by the superfluorescence ratio tests:
# (power in microwatts, fitted drive amplitude, fitted Kerr strength).
POWER_SERIES = (
    (100.0, 0.045, 0.10),
    (150.0, 0.075, 0.205),
    (310.0, 0.16, 0.45),
)


def ref_params(fock_dim=40, kerr=REF_KERR, rabi=REF_RABI, delta=REF_DELTA, gamma=REF_GAMMA):
    return CollectiveModelParams(
        delta=delta, rabi=rabi, kerr=kerr, gamma=gamma, fock_dim=fock_dim
    )


@pytest.fixture(scope="session")
def ref_steady_40():
    """Steady state of the reference set at D=40, shared across tests."""
    import kerrspec as ks

    liouv = ks.build_liouvillian(ref_params(40))
    return liouv, ks.steady_state(liouv)


@pytest.fixture(scope="session")
def ref_steady_24():
    import kerrspec as ks

    liouv = ks.build_liouvillian(ref_params(24))
    return liouv, ks.steady_state(liouv)


def linear_alpha(delta, rabi, gamma):
    """Closed-form coherent amplitude of the undamped-Kerr (linear) mode."""
    return -rabi / (delta - 0.5j * gamma)


def occupation(rho):
    import kerrspec as ks

    d = rho.shape[0]
    a = ks.annihilation(d)
    return float(np.real(ks.expectation(a.conj().T @ a, rho)))
