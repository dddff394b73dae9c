"""Scalar Gaussians in information form.

A value is stored as (precision, precision-weighted mean).  Precision 0
encodes the flat (uninformative) density as an ordinary finite value, which
is what lets zero-knowledge initial beliefs and messages flow through the
same arithmetic as informative ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Gaussian1D:
    """Information-form scalar Gaussian: precision and precision * mean."""

    precision: float = 0.0
    weighted_mean: float = 0.0

    def __post_init__(self):
        if not (self.precision >= 0.0):
            raise ValueError(f"precision must be >= 0, got {self.precision}")
        if not math.isfinite(self.weighted_mean):
            raise ValueError("weighted_mean must be finite")
        if self.precision == 0.0 and self.weighted_mean != 0.0:
            raise ValueError("flat value (precision 0) must have weighted_mean 0")

    @classmethod
    def from_moments(cls, mean: float, variance: float) -> "Gaussian1D":
        if variance <= 0.0:
            raise ValueError(f"variance must be > 0, got {variance}")
        lam = 1.0 / variance
        return cls(precision=lam, weighted_mean=lam * mean)

    @property
    def is_flat(self) -> bool:
        return self.precision == 0.0

    def mean(self) -> float:
        if self.is_flat:
            raise ValueError("mean of a flat Gaussian is undefined")
        return self.weighted_mean / self.precision

    def variance(self) -> float:
        return math.inf if self.is_flat else 1.0 / self.precision

    def __mul__(self, other: "Gaussian1D") -> "Gaussian1D":
        # Product of densities up to normalization: precisions and weighted
        # means add; flat is the identity.
        return Gaussian1D(
            precision=self.precision + other.precision,
            weighted_mean=self.weighted_mean + other.weighted_mean,
        )


FLAT = Gaussian1D()


def edge_message(r: float, sigma2: float, neighbor: Gaussian1D) -> Gaussian1D:
    """Gaussian in f_i implied by the pairwise measurement r = f_i + f_j + n
    (noise variance sigma2) and a belief about f_j.

    For Gaussians, max-marginalizing out f_j coincides with integrating it
    out: the result has mean r - mean(f_j) and variance sigma2 + var(f_j).
    A flat neighbor belief yields a flat message.
    """
    if sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    if neighbor.is_flat:
        return FLAT
    return Gaussian1D.from_moments(r - neighbor.mean(), sigma2 + neighbor.variance())
