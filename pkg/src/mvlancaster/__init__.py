"""Multivariate orthogonal polynomials and Lancaster bivariate laws built on one elementary basis."""

from .basis import Basis, build_basis, hypergroup_tensor, lancaster_2point, rescale_last
from .errors import LancasterError

__all__ = ["Basis", "LancasterError", "build_basis", "hypergroup_tensor", "lancaster_2point", "rescale_last"]
