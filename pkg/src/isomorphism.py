"""
Closed-form evaluation of both sides of the loop soup isomorphism

    E Q^rho_phi(F(psi(nu_i) + L^{nu_i}_inf)) = (1/alpha) E(theta^{rho,phi}
    F(psi(nu_i)))

for monomials F(x_1, ..., x_r) = prod x_i^{d_i}. Q^rho_phi is used as the
finite measure it is, without normalization.
"""

import itertools
import math
from collections.abc import Sequence

import numpy as np
from icecream import ic
from numpy.typing import ArrayLike

from src.errors import TooLargeError
from src.markov import MarkovModel, potential_kernel
from src.measures import as_atoms
from src.moments import (
    MomentGroup,
    MomentSpec,
    alpha_permanental_moment,
    poisson_mixed_moment,
    q_rho_phi_moment,
)
from src.norms import norm_u2_inf, norm_zero
from src.schemas.schemas import IsomorphismReport

MAX_DEGREE = 6
REL_TOL = 1e-9


def _prepare(
    rho: ArrayLike,
    phi: ArrayLike,
    measures: Sequence[ArrayLike],
    degrees: Sequence[int],
):
    rho, phi = as_atoms(rho), as_atoms(phi)
    if (rho < 0).any() or (phi < 0).any():
        raise ValueError('rho and phi must be nonnegative measures')
    if len(measures) != len(degrees):
        raise ValueError('one degree per measure is required')
    if any(d < 0 for d in degrees):
        raise ValueError('degrees must be nonnegative')
    if sum(degrees) > MAX_DEGREE:
        raise TooLargeError(
            f'total degree {sum(degrees)} exceeds {MAX_DEGREE}'
        )
    return rho, phi, [as_atoms(nu) for nu in measures], list(degrees)


def isomorphism_lhs(
    u: ArrayLike,
    alpha: float,
    rho: np.ndarray,
    phi: np.ndarray,
    measures: list[np.ndarray],
    degrees: list[int],
    *,
    field_kernel: ArrayLike | None = None,
) -> float:
    """Binomial expansion into psi moments times Q^rho_phi moments."""
    field_kernel = u if field_kernel is None else field_kernel
    total = 0.0
    for split in itertools.product(*(range(d + 1) for d in degrees)):
        weight = math.prod(math.comb(d, k) for d, k in zip(degrees, split))
        field = [nu for nu, k in zip(measures, split) for _ in range(k)]
        local = [
            nu for nu, d, k in zip(measures, degrees, split)
            for _ in range(d - k)
        ]
        psi = alpha_permanental_moment(field_kernel, field, alpha)
        if psi == 0.0:
            continue
        total += weight * psi * q_rho_phi_moment(u, rho, phi, local)
    return total


def isomorphism_rhs(
    u: ArrayLike,
    alpha: float,
    rho: np.ndarray,
    phi: np.ndarray,
    measures: list[np.ndarray],
    degrees: list[int],
) -> float:
    """(1/alpha) E(theta psi^d) from the Poisson partition formula."""
    groups = [MomentGroup((rho, phi))]
    for nu, d in zip(measures, degrees):
        groups.extend(MomentGroup((nu,), centered=True) for _ in range(d))
    return poisson_mixed_moment(u, alpha, MomentSpec(tuple(groups))) / alpha


def _report(lhs, rhs, spec, norms, rel_tol) -> IsomorphismReport:
    abs_diff = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs))
    rel_diff = abs_diff / scale if scale > 0 else 0.0
    ic(lhs, rhs, rel_diff)
    return IsomorphismReport(
        lhs=lhs,
        rhs=rhs,
        abs_diff=abs_diff,
        rel_diff=rel_diff,
        passed=rel_diff <= rel_tol,
        spec=spec,
        norms=norms,
    )


def _spec(alpha, rho, phi, measures, degrees, corrupted) -> dict:
    return {
        'alpha': alpha,
        'rho': rho.tolist(),
        'phi': phi.tolist(),
        'measures': [nu.tolist() for nu in measures],
        'degrees': degrees,
        'corrupted_field_kernel': corrupted,
    }


def isomorphism_check(
    model: MarkovModel,
    alpha: float,
    rho: ArrayLike,
    phi: ArrayLike,
    measures: Sequence[ArrayLike],
    degrees: Sequence[int],
    *,
    field_kernel: ArrayLike | None = None,
    rel_tol: float = REL_TOL,
) -> IsomorphismReport:
    """
    Compare both sides of the isomorphism for F = prod x_i^{d_i}.

    ``field_kernel`` replaces u on the psi side only; a wrong kernel there
    must make the check fail from degree 2 on.
    """
    if alpha <= 0:
        raise ValueError('alpha must be positive')
    rho, phi, measures, degrees = _prepare(rho, phi, measures, degrees)
    u = potential_kernel(model).u
    lhs = isomorphism_lhs(
        u, alpha, rho, phi, measures, degrees, field_kernel=field_kernel
    )
    rhs = isomorphism_rhs(u, alpha, rho, phi, measures, degrees)
    spec = _spec(
        alpha, rho, phi, measures, degrees, field_kernel is not None
    )
    return _report(lhs, rhs, spec, {}, rel_tol)


def isomorphism_check_ii(
    model: MarkovModel,
    alpha: float,
    rho: ArrayLike,
    phi: ArrayLike,
    measures: Sequence[ArrayLike],
    degrees: Sequence[int],
    *,
    rel_tol: float = REL_TOL,
) -> IsomorphismReport:
    """Same comparison, with rho measured in ||.||_0 and phi in
    ||.||_{u^2,inf}; both norms are attached to the report."""
    u = potential_kernel(model).u
    norms = {
        'rho_zero': norm_zero(u, rho),
        'phi_u2_inf': norm_u2_inf(u, phi),
    }
    if not all(math.isfinite(value) for value in norms.values()):
        raise ValueError('rho and phi must have finite norms')
    report = isomorphism_check(
        model, alpha, rho, phi, measures, degrees, rel_tol=rel_tol
    )
    return report.model_copy(update={'norms': norms})
