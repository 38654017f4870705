"""Evaluate sufficient and necessary propriety conditions and fold them into a verdict.

Every check returns a :class:`ConditionReport` whose subconditions carry the
evidence used (ranks, LP witnesses or certificates, hyperparameters).
Result identifiers name what each result covers:

========================================  =========================================
``sufficient/binomial_gamma``             binomial data, gamma priors
``sufficient/binary_gamma``               binary data, gamma priors
``sufficient/poisson_gamma``              Poisson log-link data, gamma priors
``sufficient/binomial_power``             binomial data, power priors
``sufficient/binary_power``               binary data, power priors
``sufficient/poisson_power``              Poisson log-link data, power priors
``necessary/binomial``                    rank of X and ``a_j + q_j/2 > 0``
``necessary/binomial_full_rank_z``        positive null vector when Z has full rank
``necessary/expfam_rank``                 rank of X under a proper covariance prior
========================================  =========================================
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any

from .design import DesignBundle, build_binary_star, build_bundle, poissonize
from .errors import DegenerateAllZero, WrongFamily, WrongLink, WrongPriorKind
from .linalg import RankResult, column_rank, hstack
from .lp import FeasibilityResult, exists_positive_null
from .model import FamilyKind, LinkKind, PriorBlock, ValidatedModel

PASS = "pass"
FAIL = "fail"
UNVERIFIABLE = "unverifiable"

SUFFICIENT = "sufficient"
NECESSARY = "necessary"


class Outcome(str, Enum):
    PROPER = "proper"
    IMPROPER = "improper"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Subcondition:
    name: str
    status: str
    evidence: dict = field(default_factory=dict)
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    result_id: str
    kind: str
    subconditions: tuple[Subcondition, ...]
    notes: tuple[str, ...] = ()

    @property
    def satisfied(self) -> bool:
        return bool(self.subconditions) and all(s.status == PASS for s in self.subconditions)

    @property
    def violated(self) -> bool:
        return any(s.status == FAIL for s in self.subconditions)

    def status_of(self, name: str) -> str:
        return next(s.status for s in self.subconditions if s.name == name)

    def to_dict(self) -> dict:
        return {
            "result_id": self.result_id,
            "kind": self.kind,
            "satisfied": self.satisfied,
            "violated": self.violated,
            "subconditions": [
                {"name": s.name, "status": s.status, "evidence": _jsonable(s.evidence), "detail": s.detail}
                for s in self.subconditions
            ],
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    basis: tuple[ConditionReport, ...]

    @property
    def sufficient_reports(self):
        return [r for r in self.basis if r.kind == SUFFICIENT]

    @property
    def necessary_reports(self):
        return [r for r in self.basis if r.kind == NECESSARY]

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "basis": [r.to_dict() for r in self.basis]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def render_text(self) -> str:
        lines = [f"verdict: {self.outcome.value.upper()}"]
        for rep in self.basis:
            if rep.kind == SUFFICIENT:
                tag = "SATISFIED" if rep.satisfied else "not satisfied"
            else:
                tag = "VIOLATED" if rep.violated else "not violated"
            lines.append(f"  [{rep.kind}] {rep.result_id}: {tag}")
            for s in rep.subconditions:
                extra = f"  ({s.detail})" if s.detail else ""
                lines.append(f"      {s.status:<12} {s.name}{extra}")
            for note in rep.notes:
                lines.append(f"      note: {note}")
        return "\n".join(lines)


def fraction_str(v: Fraction) -> str:
    v = Fraction(v)
    return f"{v.numerator}/{v.denominator}"


def _jsonable(obj: Any):
    if isinstance(obj, Fraction):
        return fraction_str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@lru_cache(maxsize=4096)
def _rank(M: tuple) -> RankResult:
    return column_rank(M)


@lru_cache(maxsize=4096)
def _lp(M: tuple) -> FeasibilityResult:
    return exists_positive_null(M)


def _rank_sub(name: str, M: tuple, label: str) -> tuple[Subcondition, RankResult]:
    res = _rank(M)
    ev = {"rank": res.rank, "columns": res.columns, "method": res.method}
    if res.null_vector is not None:
        ev["null_vector"] = list(res.null_vector)
    status = PASS if res.full_column_rank else FAIL
    return Subcondition(name, status, ev, f"rank({label}) = {res.rank} of {res.columns}"), res


def _lp_sub(M: tuple, label: str) -> Subcondition:
    res = _lp(M)
    if res.exists:
        ev = {"witness_e": list(res.witness_e)}
        detail = f"e > 0 with e^T {label} = 0 found"
    else:
        ev = {"certificate_h": list(res.certificate_h)}
        detail = f"no e > 0 with e^T {label} = 0; certificate h has {label} h <= 0"
    if res.rationalized:
        ev["rationalized_floats"] = True
    return Subcondition("positive_null_vector", PASS if res.exists else FAIL, ev, detail)


def _moment_sub(link, order: Fraction, auto: str | None = None) -> Subcondition:
    ev = {"required_order": order, "link": link.kind.value}
    if auto is not None:
        return Subcondition("link_moments", PASS, ev, auto)
    if link.declared_moment_order is not None:
        ev["declared_order"] = link.declared_moment_order
    ok = link.has_moment(float(order))
    if ok:
        return Subcondition("link_moments", PASS, ev, f"E|delta|^{order} finite")
    return Subcondition(
        "link_moments", UNVERIFIABLE, ev, f"finiteness of E|delta|^{order} not established for this link"
    )


def _gamma_hyper_sub(blocks, p: int) -> Subcondition:
    half_p = Fraction(p, 2)
    bad = [j for j, b in enumerate(blocks) if not (b.a > half_p and b.b > 0)]
    ev = {"a": [b.a for b in blocks], "b": [b.b for b in blocks], "p/2": half_p}
    detail = "a_j > p/2 and b_j > 0 for all j" if not bad else f"violated for blocks {bad}"
    return Subcondition("hyperparameters", FAIL if bad else PASS, ev, detail)


def _power_hyper_sub(blocks) -> Subcondition:
    bad = [j for j, b in enumerate(blocks) if not (-Fraction(b.q, 2) < b.a < 0)]
    ev = {"a": [b.a for b in blocks], "q": [b.q for b in blocks]}
    detail = "-q_j/2 < a_j < 0 for all j" if not bad else f"violated for blocks {bad}"
    return Subcondition("hyperparameters", FAIL if bad else PASS, ev, detail)


def _require_kind(blocks, kind: str) -> None:
    wrong = [j for j, b in enumerate(blocks) if b.kind != kind]
    if wrong:
        raise WrongPriorKind(f"blocks {wrong} do not carry {kind} priors")


def _require_binomial_type(model: ValidatedModel) -> None:
    if not model.family.is_binomial_type:
        raise WrongFamily(f"expected binomial or Bernoulli data, got {model.family}")


def _require_poisson_log(model: ValidatedModel) -> None:
    if model.family.kind is not FamilyKind.POISSON:
        raise WrongFamily(f"expected Poisson data, got {model.family}")
    if model.link.kind is not LinkKind.LOG:
        raise WrongLink(f"Poisson results require the log link, got {model.link}")


# ---------------------------------------------------------------------------
# sufficient conditions
# ---------------------------------------------------------------------------


def _gamma_report(result_id, model, Xstar, star_label, moment_auto=None) -> ConditionReport:
    rank_sub, _ = _rank_sub("design_full_rank", model.X_exact, "X")
    return ConditionReport(
        result_id,
        SUFFICIENT,
        (
            rank_sub,
            _lp_sub(Xstar, star_label),
            _gamma_hyper_sub(model.blocks, model.p),
            _moment_sub(model.link, Fraction(model.p), moment_auto),
        ),
    )


def check_sufficient_binomial_gamma(model: ValidatedModel, bundle: DesignBundle | None = None) -> ConditionReport:
    """Binomial data with gamma priors on every precision."""
    _require_binomial_type(model)
    _require_kind(model.blocks, "gamma")
    bundle = bundle or build_bundle(model)
    return _gamma_report("sufficient/binomial_gamma", model, bundle.Xstar_tri, "X*_tri")


def check_sufficient_binary_gamma(model: ValidatedModel) -> ConditionReport:
    """Binary data with gamma priors; uses the ``(1 - 2y_i)``-signed design."""
    Xstar, _ = build_binary_star(model)
    _require_kind(model.blocks, "gamma")
    return _gamma_report("sufficient/binary_gamma", model, Xstar, "X*")


_LOGISTIC_BOUND = "log link: reduction to the logistic cdf, all moments finite"


def check_sufficient_poisson_gamma(model: ValidatedModel) -> ConditionReport:
    """Poisson log-link data with gamma priors, via the pseudo-binomial reduction."""
    _require_poisson_log(model)
    _require_kind(model.blocks, "gamma")
    pseudo = poissonize(model)
    bundle = build_bundle(pseudo)
    rep = _gamma_report("sufficient/poisson_gamma", pseudo, bundle.Xstar_tri, "X*_tri", _LOGISTIC_BOUND)
    return ConditionReport(rep.result_id, rep.kind, rep.subconditions, (f"pseudo-binomial trials m_i = {max(model.y)}",))


def _power_report(result_id, model, XZ, XZstar, label, moment_auto=None, notes=()) -> ConditionReport:
    rank_sub, _ = _rank_sub("joint_design_full_rank", XZ, "(X, Z)")
    order = model.p - 2 * sum((b.a for b in model.blocks), Fraction(0))
    return ConditionReport(
        result_id,
        SUFFICIENT,
        (
            rank_sub,
            _lp_sub(XZstar, label),
            _power_hyper_sub(model.blocks),
            _moment_sub(model.link, order, moment_auto),
        ),
        tuple(notes),
    )


def check_sufficient_power(model: ValidatedModel, bundle: DesignBundle | None = None) -> ConditionReport:
    """Power priors (all ``b_j = 0``); dispatches on the response family."""
    _require_kind(model.blocks, "power")
    XZ = hstack(model.X_exact, model.Z_exact)
    kind = model.family.kind
    if kind is FamilyKind.BERNOULLI:
        Xs, Zs = build_binary_star(model)
        return _power_report("sufficient/binary_power", model, XZ, hstack(Xs, Zs), "(X*, Z*)")
    if kind is FamilyKind.BINOMIAL:
        bundle = bundle or build_bundle(model)
        return _power_report("sufficient/binomial_power", model, XZ, bundle.XZstar_tri, "(X*_tri, Z*_tri)")
    _require_poisson_log(model)
    pseudo = poissonize(model)
    b = build_bundle(pseudo)
    return _power_report(
        "sufficient/poisson_power",
        pseudo,
        XZ,
        b.XZstar_tri,
        "(X*_tri, Z*_tri)",
        _LOGISTIC_BOUND,
        (f"pseudo-binomial trials m_i = {max(model.y)}",),
    )


# ---------------------------------------------------------------------------
# necessary conditions
# ---------------------------------------------------------------------------


def _proper_covariance_prior(blocks) -> bool:
    return all(b.a > 0 and b.b > 0 for b in blocks)


def check_necessary(
    model: ValidatedModel, bundle: DesignBundle | None = None, *, assert_proper_psi: bool = False
) -> list[ConditionReport]:
    """Evaluate every necessary condition that applies to ``model``.

    The exponential-family rank condition needs a proper prior on the
    random-effect covariance; it is applied when ``assert_proper_psi`` is
    set or when every block carries a proper gamma prior.
    """
    reports = []
    if model.family.is_binomial_type:
        binary = model.family.kind is FamilyKind.BERNOULLI
        rank_sub, _ = _rank_sub("design_full_rank", model.X_exact, "X")
        bad = [j for j, b in enumerate(model.blocks) if not b.a + Fraction(b.q, 2) > 0]
        hyper = Subcondition(
            "hyperparameter_lower_bound",
            FAIL if bad else PASS,
            {"a+q/2": [b.a + Fraction(b.q, 2) for b in model.blocks]},
            "a_j + q_j/2 > 0 for all j" if not bad else f"a_j + q_j/2 <= 0 for blocks {bad}",
        )
        reports.append(
            ConditionReport(
                "necessary/binary" if binary else "necessary/binomial",
                NECESSARY,
                (rank_sub, hyper),
                ("applied to gamma (b_j > 0) and power (b_j = 0) priors alike",),
            )
        )

        z_rank = _rank(model.Z_exact)
        if z_rank.full_column_rank:
            if binary:
                Xstar, label = build_binary_star(model)[0], "X*"
            else:
                Xstar, label = (bundle or build_bundle(model)).Xstar_tri, "X*_tri"
            lp_sub = _lp_sub(Xstar, label)
        else:
            lp_sub = Subcondition(
                "positive_null_vector",
                UNVERIFIABLE,
                {"rank_Z": z_rank.rank, "q": model.q},
                "Z lacks full column rank; this condition is not implied",
            )
        reports.append(
            ConditionReport(
                "necessary/binary_full_rank_z" if binary else "necessary/binomial_full_rank_z",
                NECESSARY,
                (lp_sub,),
            )
        )

    if model.family.b_monotone:
        proper = assert_proper_psi or _proper_covariance_prior(model.blocks)
        if proper:
            sub, _ = _rank_sub("design_full_rank", model.X_exact, "X")
            why = "asserted by caller" if assert_proper_psi else "all blocks carry proper gamma priors"
            notes = (f"proper covariance prior: {why}",)
        else:
            sub = Subcondition(
                "design_full_rank", UNVERIFIABLE, {}, "requires a proper prior on the random-effect covariance"
            )
            notes = ()
        reports.append(ConditionReport("necessary/expfam_rank", NECESSARY, (sub,), notes))
    return reports


# ---------------------------------------------------------------------------
# verdict
# ---------------------------------------------------------------------------


def _blocked(result_id: str, reason: str, evidence=None) -> ConditionReport:
    return ConditionReport(
        result_id, SUFFICIENT, (Subcondition("applicability", UNVERIFIABLE, evidence or {}, reason),)
    )


def sufficient_reports(model: ValidatedModel, bundle: DesignBundle | None = None) -> list[ConditionReport]:
    kinds = {b.kind for b in model.blocks}
    family = model.family.kind
    if len(kinds) > 1:
        return [
            _blocked(
                "sufficient/mixed_priors",
                "mixed gamma and power priors are not covered by any sufficient result",
                {"b": [b.b for b in model.blocks]},
            )
        ]
    gamma = kinds == {"gamma"}
    try:
        if family is FamilyKind.POISSON:
            return [check_sufficient_poisson_gamma(model) if gamma else check_sufficient_power(model)]
        if gamma:
            if family is FamilyKind.BERNOULLI:
                return [check_sufficient_binary_gamma(model)]
            return [check_sufficient_binomial_gamma(model, bundle)]
        return [check_sufficient_power(model, bundle)]
    except (DegenerateAllZero, WrongLink) as exc:
        rid = "sufficient/poisson_gamma" if gamma else "sufficient/poisson_power"
        return [_blocked(rid, str(exc), {"error": type(exc).__name__})]


def verdict(model: ValidatedModel, *, assert_proper_psi: bool = False) -> Verdict:
    """Improper if a necessary condition fails, else Proper if a sufficient result holds."""
    bundle = build_bundle(model) if model.family.is_binomial_type else None
    nec = check_necessary(model, bundle, assert_proper_psi=assert_proper_psi)
    suf = sufficient_reports(model, bundle)
    violated = any(r.violated for r in nec)
    satisfied = any(r.satisfied for r in suf)
    if violated and satisfied:
        raise AssertionError("a sufficient result holds while a necessary one fails; inconsistent checks")
    if violated:
        outcome = Outcome.IMPROPER
    elif satisfied:
        outcome = Outcome.PROPER
    else:
        outcome = Outcome.INDETERMINATE
    return Verdict(outcome, tuple(suf + nec))


def jeffreys_power_model(model: ValidatedModel) -> ValidatedModel:
    """Same data with every block given the ``a = -1/4`` power prior that dominates the Jeffreys prior."""
    blocks = [PriorBlock(b.q, Fraction(-1, 4), 0) for b in model.blocks]
    return model.replace(blocks=blocks)


def jeffreys_verdict(model: ValidatedModel) -> Verdict:
    """Propriety under the approximate Jeffreys prior on the precisions.

    The Jeffreys density is bounded by a power prior with ``a = -1/4``, so
    the power-prior sufficient result with that exponent gives propriety.
    Only canonical links are covered.
    """
    canonical = (model.family.kind is FamilyKind.POISSON and model.link.kind is LinkKind.LOG) or (
        model.family.is_binomial_type and model.link.kind is LinkKind.LOGIT
    )
    if not canonical:
        rep = _blocked("sufficient/jeffreys", f"non-canonical link {model.link} for {model.family}")
        return Verdict(Outcome.INDETERMINATE, (rep,))
    try:
        rep = check_sufficient_power(jeffreys_power_model(model))
    except DegenerateAllZero as exc:
        rep = _blocked("sufficient/poisson_power", str(exc), {"error": type(exc).__name__})
    rep = ConditionReport(rep.result_id, rep.kind, rep.subconditions, rep.notes + ("Jeffreys prior bounded by power prior a = -1/4",))
    return Verdict(Outcome.PROPER if rep.satisfied else Outcome.INDETERMINATE, (rep,))
