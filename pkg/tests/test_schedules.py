import numpy as np
import pytest
from hypothesis import given, strategies as st

from iqasim import AnnealPath, FieldProfile, evaluate_path, field_off_tau, gamma
from iqasim.errors import DomainError, UnsupportedProfileError


def test_path_examples():
    path = AnnealPath(0.1, 0.1, 1.0, 1.0, 10.0, 0.1)
    assert evaluate_path(path, 0.0) == (0.1, 0.1)
    assert evaluate_path(path, 10.0) == (1.0, 1.0)
    path = AnnealPath(0.0, 0.0, 1.0, 1.0, 4.0, 0.1)
    assert evaluate_path(path, 2.0)[0] == pytest.approx(0.5, abs=0)


def test_path_domain_errors():
    path = AnnealPath(0.0, 0.0, 1.0, 1.0, 4.0, 0.1)
    with pytest.raises(DomainError):
        evaluate_path(path, -0.1)
    with pytest.raises(DomainError):
        evaluate_path(path, 4.1)
    with pytest.raises(DomainError):
        AnnealPath(0.5, 0.5, 0.4, 1.0, 1.0, 0.1)
    with pytest.raises(DomainError):
        AnnealPath(0.0, 0.0, 1.0, 1.0, 1.0, 2.0)
    with pytest.raises(DomainError):
        AnnealPath(0.0, 0.0, 1.0, 1.0, -1.0, 0.1)


def test_gamma_examples():
    ramp = FieldProfile.ramp(4)
    assert gamma(ramp, 1, 0.0) == 1.0
    assert gamma(ramp, 4, 0.125) == pytest.approx(0.5, abs=1e-15)
    quench = FieldProfile.quench(4)
    # spin N's drop point is tau = 0; the second branch owns the endpoint
    assert gamma(quench, 4, 0.0) == 0.0
    assert gamma(quench, 3, 0.0) == 1.0
    homog = FieldProfile.homogeneous(4)
    assert gamma(homog, 2, 0.25) == 0.75


def test_gamma_domain_errors():
    ramp = FieldProfile.ramp(4)
    with pytest.raises(DomainError):
        gamma(ramp, 0, 0.5)
    with pytest.raises(DomainError):
        gamma(ramp, 5, 0.5)
    with pytest.raises(DomainError):
        gamma(ramp, 1, 1.5)


def test_field_off_tau():
    ramp = FieldProfile.ramp(4)
    assert field_off_tau(ramp, 4) == 0.25
    assert field_off_tau(ramp, 1) == 1.0
    assert field_off_tau(FieldProfile.quench(4), 4) == 0.0
    with pytest.raises(UnsupportedProfileError):
        field_off_tau(FieldProfile.homogeneous(4), 1)


@given(n=st.integers(1, 40), j=st.integers(1, 40),
       tau=st.floats(0.0, 1.0), tau2=st.floats(0.0, 1.0))
def test_ramp_monotone_and_lipschitz(n, j, tau, tau2):
    if j > n:
        j = 1 + (j - 1) % n
    ramp = FieldProfile.ramp(n)
    g1, g2 = gamma(ramp, j, tau), gamma(ramp, j, tau2)
    if tau <= tau2:
        assert g1 >= g2
    assert abs(g1 - g2) <= n * abs(tau - tau2) + 1e-12


@pytest.mark.parametrize("n", [1, 3, 4, 7, 16])
def test_ramp_off_count_at_multiples(n):
    ramp = FieldProfile.ramp(n)
    for k in range(n + 1):
        tau = k / n
        off = sum(gamma(ramp, j, tau) == 0.0 for j in range(1, n + 1))
        assert off == k


def test_field_arrays_match_scalar():
    for prof in (FieldProfile.ramp(6), FieldProfile.quench(6)):
        for tau in np.linspace(0, 1, 23):
            arr = prof.fields(0.3, tau)
            assert arr.tolist() == [gamma(prof, j, tau) for j in range(1, 7)]
    homog = FieldProfile.homogeneous(3)
    assert homog.fields(0.25, 0.9).tolist() == [0.75] * 3


def test_gamma_zero_clamp():
    # breakpoint arithmetic never leaves a stray 1e-16 field on
    ramp = FieldProfile.ramp(3)
    assert gamma(ramp, 1, 2 / 3 + 1 / 3) == 0.0
    assert gamma(ramp, 2, 1 / 3 + 1 / 3) == 0.0
