"""Shared fixtures: catalog fields, dampings and initial data."""

import numpy as np
import pytest

from rough_transport.scenarios import DAMPING_CATALOG, FIELD_CATALOG, U0_CATALOG


def field(field_id, d=1, T=1.0):
    return FIELD_CATALOG[field_id](d, T)


def damping(damping_id, d=1):
    return DAMPING_CATALOG[damping_id](d)


def u0_fn(u0_id, d=1):
    return U0_CATALOG[u0_id](d)


@pytest.fixture
def zero_field():
    return field("zero")


@pytest.fixture
def linear_field():
    return field("linear_expand")


@pytest.fixture
def contract_field():
    return field("linear_contract")


@pytest.fixture
def rotation_field():
    return field("rotation", d=2, T=np.pi / 2.0)


@pytest.fixture
def shear_field():
    return field("shear", d=2)


@pytest.fixture
def zero_damping():
    return damping("zero")
