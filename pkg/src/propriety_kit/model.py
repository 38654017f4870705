"""GLMM description, prior blocks, the family/link registry, and validation.

Numbers are ingested as exact rationals wherever the input allows it
(integers, :class:`~fractions.Fraction`, decimal strings, and floats whose
shortest repr is a short decimal), so that rank and feasibility decisions
downstream never depend on a floating-point tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import special

from .errors import (
    DimensionMismatch,
    EmptyBlock,
    ModelValidationError,
    ParseError,
    ResponseOutOfRange,
)

# Floats with more significant digits than this are treated as inexact.
SHORT_DECIMAL_DIGITS = 12

# Monotonicity of the cumulant function b(theta) in the exponential-family form.
B_MONOTONE = {
    "binomial": True,
    "bernoulli": True,
    "poisson": True,
    "gamma": True,
    "inverse_gaussian": True,
    "normal": False,
}


class FamilyKind(str, Enum):
    BINOMIAL = "binomial"
    BERNOULLI = "bernoulli"
    POISSON = "poisson"


class LinkKind(str, Enum):
    LOGIT = "logit"
    PROBIT = "probit"
    LOG = "log"
    USER_CDF = "usercdf"


@dataclass(frozen=True)
class Family:
    kind: FamilyKind

    @property
    def b_monotone(self) -> bool:
        return B_MONOTONE[self.kind.value]

    @property
    def is_binomial_type(self) -> bool:
        return self.kind in (FamilyKind.BINOMIAL, FamilyKind.BERNOULLI)

    def __str__(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class Link:
    """Link function together with the tail information the propriety checks need.

    For binomial families the link is the inverse of a cdf ``F``; the
    moment condition concerns a random variable distributed as ``F``.
    ``UserCdf`` links carry a declared finite moment order instead of a
    known distribution; ``mean_fn`` is an optional derivative of the cdf.
    """

    kind: LinkKind
    declared_moment_order: float | None = None
    mean_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @property
    def all_moments_finite(self) -> bool:
        return self.kind in (LinkKind.LOGIT, LinkKind.PROBIT)

    @property
    def is_canonical_for_binomial(self) -> bool:
        return self.kind is LinkKind.LOGIT

    def has_moment(self, order: float) -> bool | None:
        """Whether ``E|delta|^order`` is finite; ``None`` when undecidable."""
        if self.all_moments_finite:
            return True
        if self.declared_moment_order is not None and self.declared_moment_order >= order:
            return True
        return None

    def cdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind is LinkKind.LOGIT:
            return special.expit(eta)
        if self.kind is LinkKind.PROBIT:
            return special.ndtr(eta)
        raise ValueError(f"link {self.kind.value} has no cdf")

    def mean_derivative(self, eta):
        """Derivative ``t'(eta)`` of the unit mean with respect to the linear predictor."""
        eta = np.asarray(eta, dtype=float)
        if self.kind is LinkKind.LOGIT:
            f = special.expit(eta)
            return f * (1.0 - f)
        if self.kind is LinkKind.PROBIT:
            return np.exp(-0.5 * eta * eta) / np.sqrt(2.0 * np.pi)
        if self.kind is LinkKind.LOG:
            return np.exp(eta)
        if self.mean_fn is None:
            raise ValueError("UserCdf link was declared without a mean derivative")
        return np.asarray(self.mean_fn(eta), dtype=float)

    def __str__(self) -> str:
        return self.kind.value


LOGIT = Link(LinkKind.LOGIT)
PROBIT = Link(LinkKind.PROBIT)
LOG = Link(LinkKind.LOG)


def user_cdf(moment_order: float | None = None, mean_fn=None) -> Link:
    return Link(LinkKind.USER_CDF, declared_moment_order=moment_order, mean_fn=mean_fn)


@dataclass(frozen=True)
class PriorBlock:
    """Random-effect block of size ``q`` with prior ``tau^(a-1) exp(-b tau)``."""

    q: int
    a: Fraction
    b: Fraction

    def __post_init__(self):
        object.__setattr__(self, "a", to_fraction(self.a, "a"))
        object.__setattr__(self, "b", to_fraction(self.b, "b"))
        if int(self.q) != self.q:
            raise ModelValidationError(f"block size must be an integer, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))

    @property
    def kind(self) -> str:
        return "gamma" if self.b > 0 else "power"

    def log_density(self, tau):
        """Unnormalized log prior density."""
        tau = np.asarray(tau, dtype=float)
        return (float(self.a) - 1.0) * np.log(tau) - float(self.b) * tau


@dataclass
class GlmmModel:
    """User-facing model description; see :func:`validate`."""

    y: Sequence
    X: Any
    Z: Any
    blocks: Sequence[PriorBlock]
    family: Family | str = "binomial"
    link: Link | str | None = None
    m: Sequence | None = None


@dataclass(frozen=True)
class ValidatedModel:
    family: Family
    link: Link
    y: tuple[int, ...]
    m: tuple[int, ...] | None
    X_exact: tuple[tuple[Fraction, ...], ...]
    Z_exact: tuple[tuple[Fraction, ...], ...]
    X_is_exact: bool
    Z_is_exact: bool
    blocks: tuple[PriorBlock, ...]
    offsets: tuple[int, ...]
    p: int
    q: int

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @cached_property
    def X(self) -> np.ndarray:
        return _float_matrix(self.X_exact, self.p)

    @cached_property
    def Z(self) -> np.ndarray:
        return _float_matrix(self.Z_exact, self.q)

    @cached_property
    def y_array(self) -> np.ndarray:
        return np.array(self.y, dtype=float)

    @cached_property
    def m_array(self) -> np.ndarray:
        if self.m is None:
            return np.ones(self.n)
        return np.array(self.m, dtype=float)

    @cached_property
    def block_of_column(self) -> np.ndarray:
        return np.repeat(np.arange(self.r), [b.q for b in self.blocks])

    def block_columns(self, j: int) -> range:
        return range(self.offsets[j], self.offsets[j] + self.blocks[j].q)

    def replace(self, **changes) -> "ValidatedModel":
        """Return a revalidated copy with selected fields replaced."""
        base = dict(
            y=self.y,
            X=self.X_exact if self.X_is_exact else self.X,
            Z=self.Z_exact if self.Z_is_exact else self.Z,
            blocks=self.blocks,
            family=self.family,
            link=self.link,
            m=self.m,
        )
        base.update(changes)
        return validate(GlmmModel(**base))


def _float_matrix(rows, ncol: int) -> np.ndarray:
    arr = np.array([[float(v) for v in row] for row in rows], dtype=float)
    return arr.reshape(len(rows), ncol)


def _significant_digits(text: str) -> int:
    mantissa = text.lower().split("e")[0].lstrip("-+").replace(".", "")
    return len(mantissa.strip("0")) or 1


def to_rational(value, where: str = "value") -> tuple[Fraction, bool]:
    """Convert a scalar to ``(Fraction, exact)``.

    ``exact`` is false only for floats that are not short decimals, i.e.
    values that were probably produced by floating-point arithmetic.
    """
    if isinstance(value, (bool, np.bool_)):
        return Fraction(int(value)), True
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value)), True
    if isinstance(value, Fraction):
        return value, True
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise ParseError(f"non-finite number {value}", field=where)
        return Fraction(value), True
    if isinstance(value, str):
        try:
            return Fraction(value.strip()), True
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"cannot parse {value!r} as a rational number", field=where) from exc
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            raise ParseError(f"non-finite number {value}", field=where)
        text = repr(value)
        if _significant_digits(text) <= SHORT_DECIMAL_DIGITS:
            return Fraction(text), True
        return Fraction(value), False
    raise ParseError(f"unsupported numeric type {type(value).__name__}", field=where)


def to_fraction(value, where: str = "value") -> Fraction:
    return to_rational(value, where)[0]


def _to_int(value, where: str) -> int:
    frac = to_fraction(value, where)
    if frac.denominator != 1:
        raise ResponseOutOfRange(f"{where} must be an integer, got {value!r}")
    return int(frac)


def _rational_matrix(M, name: str, n_rows: int | None):
    if isinstance(M, np.ndarray):
        if M.ndim == 1:
            raise DimensionMismatch(f"{name} must be two-dimensional")
        rows = M.tolist() if M.dtype != object else [list(r) for r in M]
        ncol = M.shape[1]
    else:
        rows = [list(r) for r in M]
        ncol = len(rows[0]) if rows else 0
    if n_rows is not None and len(rows) != n_rows:
        raise DimensionMismatch(f"{name} has {len(rows)} rows but y has length {n_rows}")
    exact = True
    out = []
    for i, row in enumerate(rows):
        if len(row) != ncol:
            raise DimensionMismatch(f"{name} row {i} has {len(row)} entries, expected {ncol}")
        conv = []
        for j, v in enumerate(row):
            frac, ok = to_rational(v, f"{name}[{i}][{j}]")
            exact &= ok
            conv.append(frac)
        out.append(tuple(conv))
    return tuple(out), ncol, exact


def _coerce_family(family) -> Family:
    if isinstance(family, Family):
        return family
    if isinstance(family, FamilyKind):
        return Family(family)
    try:
        return Family(FamilyKind(str(family).lower()))
    except ValueError as exc:
        raise ParseError(f"unknown family {family!r}", field="family") from exc


def _coerce_link(link, family: Family) -> Link:
    if isinstance(link, Link):
        return link
    if link is None:
        return LOG if family.kind is FamilyKind.POISSON else LOGIT
    if isinstance(link, dict):
        kind = link.get("kind")
        order = link.get("moment_order")
        base = _coerce_link(kind, family)
        if order is not None:
            return Link(base.kind, declared_moment_order=float(order))
        return base
    try:
        kind = LinkKind(str(link).lower())
    except ValueError as exc:
        raise ParseError(f"unknown link {link!r}", field="link") from exc
    return Link(kind)


def validate(model: GlmmModel | ValidatedModel) -> ValidatedModel:
    """Check all model invariants and resolve block column offsets.

    Raises
    ------
    DimensionMismatch
        Row or column counts disagree.
    ResponseOutOfRange
        A response lies outside the family's support, or a trial count is < 1.
    EmptyBlock
        A prior block has ``q_j = 0``.
    """
    if isinstance(model, ValidatedModel):
        return model

    family = _coerce_family(model.family)
    link = _coerce_link(model.link, family)
    if family.is_binomial_type and link.kind is LinkKind.LOG:
        raise ModelValidationError("binomial families need a cdf link (logit, probit or usercdf)")

    y = tuple(_to_int(v, f"y[{i}]") for i, v in enumerate(model.y))
    n = len(y)
    if n == 0:
        raise DimensionMismatch("no observations")

    if family.kind is FamilyKind.BINOMIAL:
        if model.m is None:
            raise DimensionMismatch("binomial family requires trial counts m")
        m = tuple(_to_int(v, f"m[{i}]") for i, v in enumerate(model.m))
        if len(m) != n:
            raise DimensionMismatch(f"m has length {len(m)} but y has length {n}")
        for i, (yi, mi) in enumerate(zip(y, m)):
            if mi < 1:
                raise ResponseOutOfRange(f"m[{i}] = {mi} must be at least 1")
            if not 0 <= yi <= mi:
                raise ResponseOutOfRange(f"y[{i}] = {yi} outside [0, {mi}]")
    elif family.kind is FamilyKind.BERNOULLI:
        for i, yi in enumerate(y):
            if yi not in (0, 1):
                raise ResponseOutOfRange(f"y[{i}] = {yi} is not binary")
        if model.m is not None and any(_to_int(v, "m") != 1 for v in model.m):
            raise ResponseOutOfRange("Bernoulli trial counts must all be 1")
        m = (1,) * n
    else:
        for i, yi in enumerate(y):
            if yi < 0:
                raise ResponseOutOfRange(f"y[{i}] = {yi} is negative")
        m = None

    X_exact, p, X_ok = _rational_matrix(model.X, "X", n)
    Z_exact, q, Z_ok = _rational_matrix(model.Z, "Z", n)
    if p == 0:
        raise DimensionMismatch("X has no columns")

    blocks = []
    for j, blk in enumerate(model.blocks):
        if not isinstance(blk, PriorBlock):
            blk = PriorBlock(**blk) if isinstance(blk, dict) else PriorBlock(*blk)
        if blk.q == 0:
            raise EmptyBlock(f"block {j} has q = 0")
        if blk.q < 0:
            raise ModelValidationError(f"block {j} has negative size")
        if blk.b < 0:
            raise ModelValidationError(f"block {j} has b = {blk.b} < 0")
        blocks.append(blk)
    if not blocks:
        raise DimensionMismatch("at least one random-effect block is required")
    total = sum(b.q for b in blocks)
    if total != q:
        raise DimensionMismatch(f"block sizes sum to {total} but Z has {q} columns")
    offsets = tuple(int(v) for v in np.cumsum([0] + [b.q for b in blocks[:-1]]))

    return ValidatedModel(
        family=family,
        link=link,
        y=y,
        m=m,
        X_exact=X_exact,
        Z_exact=Z_exact,
        X_is_exact=X_ok,
        Z_is_exact=Z_ok,
        blocks=tuple(blocks),
        offsets=offsets,
        p=p,
        q=q,
    )


def model_from_dict(doc: dict) -> ValidatedModel:
    """Build a validated model from the JSON document layout."""
    try:
        blocks = [
            PriorBlock(q=_to_int(b["q"], f"blocks[{j}].q"), a=b["a"], b=b.get("b", 0))
            for j, b in enumerate(doc["blocks"])
        ]
        model = GlmmModel(
            y=doc["y"],
            X=doc["X"],
            Z=doc["Z"],
            blocks=blocks,
            family=doc.get("family", "binomial"),
            link=doc.get("link"),
            m=doc.get("m"),
        )
    except KeyError as exc:
        raise ParseError("missing required key", field=exc.args[0]) from exc
    except TypeError as exc:
        raise ParseError(str(exc)) from exc
    return validate(model)


def load_model_json(path: str | Path) -> ValidatedModel:
    """Read a model document; floats are parsed straight to rationals."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object")
    return model_from_dict(doc)


def model_to_dict(model: ValidatedModel) -> dict:
    def num(v: Fraction):
        return str(v) if v.denominator != 1 else int(v)

    def mat(rows, exact, arr):
        if exact:
            return [[num(v) for v in row] for row in rows]
        return arr.tolist()

    link: Any = model.link.kind.value
    if model.link.declared_moment_order is not None:
        link = {"kind": link, "moment_order": model.link.declared_moment_order}
    doc = {
        "family": model.family.kind.value,
        "link": link,
        "y": list(model.y),
        "X": mat(model.X_exact, model.X_is_exact, model.X),
        "Z": mat(model.Z_exact, model.Z_is_exact, model.Z),
        "blocks": [{"q": b.q, "a": num(b.a), "b": num(b.b)} for b in model.blocks],
    }
    if model.family.kind is FamilyKind.BINOMIAL:
        doc["m"] = list(model.m)
    return doc
