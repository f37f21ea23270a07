import numpy as np
import pytest

from mft.model import SystemSpec, TypeParams


def make_paper_system(n=2, sigma_w2=1.0, sigma_v2=1.0, sigma_v02=0.0,
                      x0_sigma2=0.0, Q_bar=1.0, R_bar=0.5):
    """Homogeneous scalar benchmark system (A=1, B=0.3, D=0.5, E=0.2)."""
    tp = TypeParams(A=[[1.0]], B=[[0.3]], D=[[0.5]], E=[[0.2]],
                    Q=[[1.0]], R=[[1.0]])
    return SystemSpec(
        num_types=1, agents_per_type=n, d_x=1, d_u=1, per_type=(tp,),
        Q_bar=[[Q_bar]], R_bar=[[R_bar]], sigma_w2=sigma_w2,
        sigma_v2=sigma_v2, sigma_v02=sigma_v02, x0_sigma2=x0_sigma2,
    )


def make_two_type_system(n=3, sigma_w2=0.5, sigma_v2=0.2, sigma_v02=0.1):
    """Two scalar types with distinct dynamics and couplings."""
    tp0 = TypeParams(A=[[0.8]], B=[[0.4]], D=[[0.10, 0.05]],
                     E=[[0.05, 0.02]], Q=[[1.0]], R=[[0.8]])
    tp1 = TypeParams(A=[[1.1]], B=[[0.5]], D=[[0.03, 0.15]],
                     E=[[0.01, 0.08]], Q=[[1.5]], R=[[1.2]])
    Q_bar = np.array([[0.5, 0.1], [0.1, 0.7]])
    R_bar = np.array([[0.3, 0.0], [0.0, 0.4]])
    return SystemSpec(
        num_types=2, agents_per_type=n, d_x=1, d_u=1, per_type=(tp0, tp1),
        Q_bar=Q_bar, R_bar=R_bar, sigma_w2=sigma_w2, sigma_v2=sigma_v2,
        sigma_v02=sigma_v02,
    )


def make_vector_system(n=2, sigma_w2=0.3, sigma_v2=0.1, sigma_v02=0.0):
    """One type with a 2-dim state and 1-dim control (double integrator)."""
    tp = TypeParams(
        A=[[1.0, 0.1], [0.0, 1.0]],
        B=[[0.0], [1.0]],
        D=[[0.05, 0.0], [0.0, 0.05]],
        E=[[0.02], [0.01]],
        Q=[[1.0, 0.0], [0.0, 1.0]],
        R=[[1.0]],
    )
    return SystemSpec(
        num_types=1, agents_per_type=n, d_x=2, d_u=1, per_type=(tp,),
        Q_bar=0.5 * np.eye(2), R_bar=[[0.2]], sigma_w2=sigma_w2,
        sigma_v2=sigma_v2, sigma_v02=sigma_v02,
    )


@pytest.fixture
def paper_spec():
    return make_paper_system()


@pytest.fixture
def two_type_spec():
    return make_two_type_system()


@pytest.fixture
def vector_spec():
    return make_vector_system()
