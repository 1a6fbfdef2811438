"""Problem setting shared by the subproblem solvers."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..channel import flat_users, network_quadratic_forms, user_groups, user_offsets
from ..rates import check_scheme, link_coefficients, user_rates
from ..scenario import Scenario

LENGTH_UNIT = 100.0  # metres per internal length unit


@dataclass(frozen=True)
class Setting:
    """A scenario plus the transmission scheme and placement variant.

    The conic subproblems work in normalized units: lengths in
    ``LENGTH_UNIT`` metres, powers in units of the largest P_max and gains in
    units of ``sigma2 / p_ref`` so that the noise power is one.
    """
    scenario: Scenario
    scheme: str = "noma"
    fixed_location: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", check_scheme(self.scheme))

    # -- sizes / geometry --------------------------------------------------
    @property
    def K(self) -> int:
        return self.scenario.K

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.scenario.group_sizes

    @property
    def irs(self) -> bool:
        return self.scenario.irs_enabled and self.scenario.M > 0

    @cached_property
    def users(self) -> np.ndarray:
        return flat_users(self.scenario)

    @cached_property
    def group_of(self) -> np.ndarray:
        return user_groups(self.scenario)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return user_offsets(self.scenario)

    @cached_property
    def anchors(self) -> np.ndarray:
        """Horizontal group means (used by the fixed-location variant)."""
        return np.array([g.positions[:, :2].mean(axis=0) for g in self.scenario.groups])

    def flat(self, k: int, i: int) -> int:
        return self.offsets[k] + i

    # -- units -------------------------------------------------------------
    @property
    def p_ref(self) -> float:
        return max(self.scenario.p_max)

    @property
    def g_ref(self) -> float:
        return self.scenario.channel.sigma2 / self.p_ref

    @property
    def has_interference(self) -> bool:
        return self.scheme != "if" and self.K > 1

    @property
    def has_power(self) -> bool:
        return self.scheme != "if"

    # -- rate evaluation ---------------------------------------------------
    def coefficients(self, P, A):
        sc = self.scenario
        return [link_coefficients(self.scheme, k, i, P, A, sc.channel.sigma2, self.sizes, sc.p_max)
                for k in range(self.K) for i in range(self.sizes[k])]

    def quad(self, Q):
        return network_quadratic_forms(self.scenario, Q)

    def gains(self, Q, theta) -> np.ndarray:
        return self.quad(Q).gains(np.asarray(theta, float)[: self.scenario.M])

    def rates(self, Q, theta, P, A) -> np.ndarray:
        return user_rates(self.scheme, self.gains(Q, theta), P, A, self.scenario.channel.sigma2,
                          self.sizes, self.scenario.p_max)

    def sum_rate(self, state) -> float:
        return float(np.sum(self.rates(state.Q, state.theta, state.P, state.A)))
