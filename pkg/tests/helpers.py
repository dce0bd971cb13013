"""Random operators and polynomial vectors shared by the test modules."""
import numpy as np

from piestab.pi_operator import PIOperator
from piestab.polynomial import PolyMat


def random_poly(rng, n, degree, domain=(0.0, 1.0)):
    """``n x 1`` polynomial vector in ``s``."""
    return PolyMat.from_dense(rng.normal(size=(n, 1, degree + 1, 1)), domain)


def random_kernel(rng, rows, cols, degree, domain=(0.0, 1.0)):
    return PolyMat.from_dense(rng.normal(size=(rows, cols, degree + 1, degree + 1)), domain)


def random_operator(rng, rows, cols, degree=3, domain=(0.0, 1.0)):
    N0 = PolyMat.from_dense(rng.normal(size=(rows, cols, degree + 1, 1)), domain)
    return PIOperator(N0, random_kernel(rng, rows, cols, degree, domain), random_kernel(rng, rows, cols, degree, domain))


def sup(x):
    return float(np.max(np.abs(x), initial=0.0))
