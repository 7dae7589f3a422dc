"""Lévy-type representations and membership criteria for mixtures of
discrete, absolutely continuous and continuous singular distributions."""

__version__ = "0.1.0"

from .measure_alg import (AtomicMeasure, CantorIFS, DeclaredGeneric, GridDensity,  # noqa: E402
                          MixtureDistribution, ProductCF, mixture_convolve)
from .charfun import (PiMultiple, certified_inf_modulus, certified_min_modulus_fd,  # noqa: E402
                      distinguished_log, eval_cf, winding_index)
from .criteria import (convolution_power_domination, decomposition_check,  # noqa: E402
                       dominated_check, pure_singular_verdict, ratio_test, rid_criteria)
from .spectral import (assemble_triplet, compute_W, extract_discrete, extract_triplet,  # noqa: E402
                       invert_fd, recover_va, synthesize_cf)
from .tvbounds import (TrigPoly, bound_constants, bound_power_norm, exact_power_norm,  # noqa: E402
                       rational_basis_lift, refined_bound_power_norm)
