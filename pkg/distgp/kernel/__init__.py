from distgp.kernel.basis import BasisSpec, kernel_sections_basis, kl_basis, nystrom_basis
from distgp.kernel.eigen import (
    EigenSystem,
    custom_eigensystem,
    exponential_eigensystem,
    kernel_from_spectrum,
    numerical_eigensystem,
    spline_eigensystem,
)
from distgp.kernel.gram import expected_gram, gaussian_section_gram
from distgp.kernel.kernels import TOL_PSD, KernelSpec, gaussian_kernel, spline_kernel
from distgp.kernel.measures import InputMeasure

__all__ = [
    "BasisSpec",
    "EigenSystem",
    "InputMeasure",
    "KernelSpec",
    "TOL_PSD",
    "custom_eigensystem",
    "expected_gram",
    "exponential_eigensystem",
    "gaussian_kernel",
    "gaussian_section_gram",
    "kernel_from_spectrum",
    "kernel_sections_basis",
    "kl_basis",
    "numerical_eigensystem",
    "nystrom_basis",
    "spline_eigensystem",
    "spline_kernel",
]
