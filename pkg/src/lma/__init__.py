"""Decide logmodularity of unital subalgebras of M_n by recovering their block upper triangular form."""

from .algebra import (
    Partition,
    Subalgebra,
    adjoint_algebra,
    close_under_products,
    conjugate,
    contains,
    corner,
    equals_algebra,
    nest_algebra,
    row_witness_basis,
    support_relation,
)
from .matcore import ToleranceConfig, cholesky_upper, haar_unitary, reverse_cholesky_upper
from .triangularizer import Certificate, Failure, FailureStage, triangularize, verify_certificate

__version__ = "0.1.0"
