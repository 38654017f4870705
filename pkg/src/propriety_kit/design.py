"""Index partition, sign vector and the augmented/signed design matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DegenerateAllZero, WrongFamily, WrongLink
from .model import LOGIT, FamilyKind, LinkKind, ValidatedModel

Matrix = tuple[tuple[Fraction, ...], ...]


@dataclass(frozen=True)
class Partition:
    """Zero-based index sets: ``I1`` (y = 0), ``I2`` (y = m), ``I3`` (strictly between)."""

    I1: tuple[int, ...]
    I2: tuple[int, ...]
    I3: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.I3)

    @property
    def n(self) -> int:
        return len(self.I1) + len(self.I2) + len(self.I3)


@dataclass(frozen=True)
class DesignBundle:
    t: tuple[int, ...]
    X_tri: Matrix
    Xstar_tri: Matrix
    Z_tri: Matrix
    Zstar_tri: Matrix

    @property
    def rows(self) -> int:
        return len(self.t)

    @property
    def XZstar_tri(self) -> Matrix:
        return tuple(x + z for x, z in zip(self.Xstar_tri, self.Zstar_tri))


def partition_indices(y, m) -> Partition:
    I1, I2, I3 = [], [], []
    for i, (yi, mi) in enumerate(zip(y, m)):
        if yi == 0:
            I1.append(i)
        elif yi == mi:
            I2.append(i)
        else:
            I3.append(i)
    return Partition(tuple(I1), tuple(I2), tuple(I3))


def _signed(rows: Matrix, t) -> Matrix:
    return tuple(tuple(ti * v for v in row) for ti, row in zip(t, rows))


def build_bundle(model: ValidatedModel, part: Partition | None = None) -> DesignBundle:
    """Stack the ``I3`` rows under ``X`` (and ``Z``) and apply the row signs.

    Appended rows follow increasing original index.
    """
    if model.family.kind is FamilyKind.POISSON:
        raise WrongFamily("build the bundle from poissonize(model)")
    if part is None:
        part = partition_indices(model.y, model.m)
    in_i2 = set(part.I2)
    t = tuple(-1 if i in in_i2 else 1 for i in range(model.n)) + (-1,) * part.k
    X_tri = model.X_exact + tuple(model.X_exact[i] for i in part.I3)
    Z_tri = model.Z_exact + tuple(model.Z_exact[i] for i in part.I3)
    return DesignBundle(t, X_tri, _signed(X_tri, t), Z_tri, _signed(Z_tri, t))


def build_binary_star(model: ValidatedModel) -> tuple[Matrix, Matrix]:
    """Rows ``(1 - 2 y_i) x_i`` and ``(1 - 2 y_i) z_i`` for binary data."""
    if model.family.kind is not FamilyKind.BERNOULLI:
        raise WrongFamily(f"binary star matrices need a Bernoulli model, got {model.family}")
    c = [1 - 2 * yi for yi in model.y]
    return _signed(model.X_exact, c), _signed(model.Z_exact, c)


def poissonize(model: ValidatedModel) -> ValidatedModel:
    """Pseudo-binomial model with every ``m_i = max(y)`` and a logistic cdf.

    Only the log link is supported for Poisson data.
    """
    if model.family.kind is not FamilyKind.POISSON:
        raise WrongFamily(f"poissonize needs a Poisson model, got {model.family}")
    if model.link.kind is not LinkKind.LOG:
        raise WrongLink(f"Poisson results require the log link, got {model.link}")
    top = max(model.y)
    if top == 0:
        raise DegenerateAllZero("all Poisson responses are zero")
    return model.replace(family="binomial", link=LOGIT, m=[top] * model.n)


def poisson_domination_constant(y_max: int) -> float:
    """Smallest ``d`` with ``(1 + e^w)^y <= d exp(e^w)`` for every real ``w``.

    With ``x = e^w`` the ratio ``(1 + x)^y e^{-x}`` peaks at ``x = y - 1``,
    giving ``d = e^{1-y} y^y`` for ``y >= 2``; for ``y`` in {0, 1} the
    bound holds with ``d = 1``.
    """
    if y_max < 0:
        raise ValueError("y_max must be nonnegative")
    if y_max <= 1:
        return 1.0
    return math.exp(1 - y_max + y_max * math.log(y_max))
