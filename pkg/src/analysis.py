"""
Tabular summaries of a chain and a bundle of named measures.

The analyzer turns the exact engines into pandas tables: moment tables for
``permfield moments`` and ``POST /moments``, norm tables for ``permfield
norms`` and ``POST /norms``, and flat frames of verification reports for
CSV export.
"""

import math
from collections.abc import Mapping, Sequence
from typing import Any

import numpy as np
import pandas as pd
from icecream import ic
from numpy.typing import ArrayLike

from src.errors import NumericalError
from src.markov import MarkovModel, potential_kernel
from src.measures import as_atoms
from src.moments import (
    alpha_permanental_moment,
    mu_moment,
    q_rho_phi_moment,
    qxy_moment,
)
from src.norms import evaluate_norm
from src.schemas.schemas import MomentRow, NormKind, VerificationReport

FIELD_NAMES = ('rho', 'phi')
STATE_NORMS = (
    NormKind.U2_INF,
    NormKind.ZERO,
    NormKind.TWO_PD,
    NormKind.PI_UBAR,
    NormKind.W_NORM,
    NormKind.PHI_NORM,
)
MOMENT_COLUMNS = ['kind', 'measures', 'order', 'value']


class MomentAnalyzer:
    """Moment and norm tables for one chain and its named measures."""

    def __init__(
        self,
        model: MarkovModel,
        measures: Mapping[str, ArrayLike],
        alpha: float = 1.0,
    ):
        if alpha <= 0:
            raise ValueError('alpha must be positive')
        self.model = model
        self.alpha = alpha
        self.measures = {k: as_atoms(v) for k, v in measures.items()}
        for name, atoms in self.measures.items():
            if atoms.size != model.n:
                raise ValueError(
                    f'measure {name} has {atoms.size} atoms, need {model.n}'
                )
        self.u = potential_kernel(model).u

    @property
    def field_measures(self) -> dict[str, np.ndarray]:
        """Measures fed to psi; rho and phi are kept for Q^rho_phi."""
        return {
            k: v for k, v in self.measures.items() if k not in FIELD_NAMES
        }

    def get_overview(self) -> dict[str, Any]:
        kernel = potential_kernel(self.model)
        return {
            'states': list(self.model.states),
            'n': self.model.n,
            'decay_rate': self.model.decay_rate,
            'symmetric': kernel.symmetric,
            'u': self.u.tolist(),
            'measures': sorted(self.measures),
        }

    def _row(self, kind, label, order, value) -> dict[str, Any]:
        return MomentRow(
            kind=kind, measures=label, order=order, value=value
        ).model_dump()

    def get_alpha_moments(self, orders: Sequence[int]) -> list[dict]:
        """E psi(nu)^n per measure, and the joint product moment."""
        rows = []
        for name, nu in self.field_measures.items():
            for n in orders:
                value = alpha_permanental_moment(self.u, [nu] * n, self.alpha)
                rows.append(self._row('alpha_permanental', name, n, value))
        if len(self.field_measures) > 1:
            names = list(self.field_measures)
            value = alpha_permanental_moment(
                self.u, list(self.field_measures.values()), self.alpha
            )
            rows.append(
                self._row(
                    'alpha_permanental', '*'.join(names), len(names), value
                )
            )
        return rows

    def get_mu_moments(self, orders: Sequence[int]) -> list[dict]:
        """mu((L^nu)^k) per measure."""
        return [
            self._row('mu', name, k, mu_moment(self.u, [nu] * k))
            for name, nu in self.field_measures.items()
            for k in orders
        ]

    def get_qxy_moments(self, orders: Sequence[int]) -> list[dict]:
        """Q^{x,y}((L^nu)^k) per measure and ordered pair of states."""
        states = self.model.states
        rows = []
        for name, nu in self.field_measures.items():
            for k in orders:
                for x, y in np.ndindex(self.model.n, self.model.n):
                    value = qxy_moment(self.u, x, y, [nu] * k)
                    label = f'{name} | {states[x]}->{states[y]}'
                    rows.append(self._row('qxy', label, k, value))
        return rows

    def get_q_rho_phi_moments(self, orders: Sequence[int]) -> list[dict]:
        """Q^rho_phi((L^nu)^k), when both rho and phi are in the bundle."""
        if not all(name in self.measures for name in FIELD_NAMES):
            return []
        rho, phi = (self.measures[name] for name in FIELD_NAMES)
        rows = [
            self._row(
                'q_rho_phi', '1', 0, q_rho_phi_moment(self.u, rho, phi, [])
            )
        ]
        for name, nu in self.field_measures.items():
            for k in orders:
                value = q_rho_phi_moment(self.u, rho, phi, [nu] * k)
                rows.append(self._row('q_rho_phi', name, k, value))
        return rows

    def get_moment_table(
        self, orders: Sequence[int] = (1, 2, 3)
    ) -> pd.DataFrame:
        rows = [
            *self.get_alpha_moments(orders),
            *self.get_mu_moments(orders),
            *self.get_qxy_moments(orders),
            *self.get_q_rho_phi_moments(orders),
        ]
        ic(len(rows))
        return pd.DataFrame(rows, columns=MOMENT_COLUMNS)

    def get_norm_table(self) -> pd.DataFrame:
        """Every state-space norm of every measure; NaN where undefined."""
        rows = []
        for name, nu in self.measures.items():
            row: dict[str, Any] = {'measure': name}
            for kind in STATE_NORMS:
                try:
                    row[kind.value] = evaluate_norm(kind, self.model, nu)
                except NumericalError as exc:
                    ic(name, kind, exc)
                    row[kind.value] = math.nan
            rows.append(row)
        columns = ['measure', *(kind.value for kind in STATE_NORMS)]
        return pd.DataFrame(rows, columns=columns)

    def get_comprehensive_analysis(self) -> dict[str, Any]:
        return {
            'overview': self.get_overview(),
            'moments': self.get_moment_table().to_dict(orient='records'),
            'norms': self.get_norm_table().to_dict(orient='records'),
        }


def report_frame(reports: Sequence[VerificationReport]) -> pd.DataFrame:
    """One row per moment check: (report, label, delta, exact, ...)."""
    rows = [
        {
            'report': report.name,
            'label': check.label,
            'delta': check.delta,
            'exact': check.exact,
            'limit': check.limit,
            'bias': check.bias,
            'estimate': check.estimate,
            'standard_error': check.standard_error,
            'z_score': check.z_score,
            'passed': report.passed,
        }
        for report in reports
        for check in report.checks
    ]
    return pd.DataFrame(
        rows,
        columns=[
            'report',
            'label',
            'delta',
            'exact',
            'limit',
            'bias',
            'estimate',
            'standard_error',
            'z_score',
            'passed',
        ],
    )


def get_analyzer(
    model: MarkovModel,
    measures: Mapping[str, ArrayLike],
    alpha: float = 1.0,
) -> MomentAnalyzer:
    return MomentAnalyzer(model, measures, alpha)
