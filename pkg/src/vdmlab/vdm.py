"""Vertical deformation mappings (VDMs) of the loss axis.

A VDM replaces the training loss ``l`` by ``delta(l)`` with ``delta``
nondecreasing, so gradient descent on the deformed surface follows
``delta'(l) * grad l``. Each family below exposes the exact value and the
exact first and second derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import DomainError, InvalidSpec


def _floats(obj, *names):
    for n in names:
        try:
            object.__setattr__(obj, n, float(getattr(obj, n)))
        except (TypeError, ValueError):
            raise InvalidSpec(f"{n} must be a real number, got {getattr(obj, n)!r}") from None


def _positive(name, x):
    if not (math.isfinite(x) and x > 0):
        raise InvalidSpec(f"{name} must be positive, got {x!r}")


def _check_loss(loss):
    if not math.isfinite(loss):
        raise DomainError(f"loss {loss!r} is not finite", loss)


@dataclass(frozen=True)
class DeformationSpec:
    """Base class; concrete families are the subclasses below."""

    def check_domain(self, loss: float) -> None:
        _check_loss(loss)

    def value(self, loss: float) -> float:
        raise NotImplementedError

    def derivative(self, loss: float) -> float:
        raise NotImplementedError

    def second_derivative(self, loss: float) -> float:
        raise NotImplementedError

    def to_string(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.to_string()


@dataclass(frozen=True)
class Identity(DeformationSpec):
    def value(self, loss):
        self.check_domain(loss)
        return float(loss)

    def derivative(self, loss):
        self.check_domain(loss)
        return 1.0

    def second_derivative(self, loss):
        self.check_domain(loss)
        return 0.0

    def to_string(self):
        return "identity"


@dataclass(frozen=True)
class Scale(DeformationSpec):
    """``delta(l) = c * l``; equivalent to multiplying the learning rate by c."""

    c: float

    def __post_init__(self):
        _floats(self, "c")
        _positive("c", self.c)

    def value(self, loss):
        self.check_domain(loss)
        return self.c * loss

    def derivative(self, loss):
        self.check_domain(loss)
        return float(self.c)

    def second_derivative(self, loss):
        self.check_domain(loss)
        return 0.0

    def to_string(self):
        return f"scale:{self.c!r}"


@dataclass(frozen=True)
class ArctanPower(DeformationSpec):
    """AP(a1, a2, a3, a4): ``a1 * arctan(a2 l)**a3 + a4 l``.

    The domain is ``l >= 0`` (``l > 0`` when ``a3 < 1``). For integer
    exponents the closed form is real on negative losses too, and those are
    admitted: benchmark surfaces dip a hair below zero near their minima.
    """

    a1: float
    a2: float
    a3: float
    a4: float = 0.0

    def __post_init__(self):
        _floats(self, "a1", "a2", "a3", "a4")
        _positive("a1", self.a1)
        _positive("a2", self.a2)
        _positive("a3", self.a3)
        if not (math.isfinite(self.a4) and self.a4 >= 0):
            raise InvalidSpec(f"a4 must be nonnegative, got {self.a4!r}")

    @property
    def integer_exponent(self):
        return float(self.a3).is_integer()

    def check_domain(self, loss):
        _check_loss(loss)
        if loss < 0 and not self.integer_exponent:
            raise DomainError(
                f"AP with non-integer exponent a3={self.a3!r} needs loss >= 0, got {loss!r}", loss
            )
        if loss == 0 and self.a3 < 1:
            raise DomainError(f"AP derivative diverges at loss 0 for a3={self.a3!r} < 1", loss)

    def _pow(self, t, e):
        if e == 0:
            return 1.0
        return t**e

    def value(self, loss):
        self.check_domain(loss)
        t = math.atan(self.a2 * loss)
        return self.a1 * self._pow(t, self.a3) + self.a4 * loss

    def derivative(self, loss):
        self.check_domain(loss)
        x = self.a2 * loss
        t = math.atan(x)
        return self.a1 * self.a3 * self._pow(t, self.a3 - 1) * self.a2 / (1.0 + x * x) + self.a4

    def second_derivative(self, loss):
        self.check_domain(loss)
        if loss == 0 and 1 < self.a3 < 2:
            raise DomainError(f"AP second derivative diverges at loss 0 for a3={self.a3!r}", loss)
        x = self.a2 * loss
        t = math.atan(x)
        curvature_term = 0.0 if self.a3 == 1 else (self.a3 - 1) * self._pow(t, self.a3 - 2)
        return (
            self.a1 * self.a3 * self.a2**2 / (1.0 + x * x) ** 2
            * (curvature_term - 2.0 * x * self._pow(t, self.a3 - 1))
        )

    def to_string(self):
        return f"ap:{self.a1!r},{self.a2!r},{self.a3!r},{self.a4!r}"


@dataclass(frozen=True)
class LogExp(DeformationSpec):
    """LE(e1, e2): ``e1 * ln(exp(l) - e2)``, defined for ``l > ln(e2)``.

    The slope ``e1 * e^l / (e^l - e2)`` blows up at the domain edge and
    decays to ``e1`` for large losses.
    """

    e1: float
    e2: float

    def __post_init__(self):
        _floats(self, "e1", "e2")
        _positive("e1", self.e1)
        _positive("e2", self.e2)

    def check_domain(self, loss):
        _check_loss(loss)
        # exp overflows past ~709; the mapping is then indistinguishable from e1*l.
        if loss < 700 and not math.exp(loss) > self.e2:
            raise DomainError(
                f"LE({self.e1!r}, {self.e2!r}) needs exp(loss) > {self.e2!r}, "
                f"i.e. loss > {math.log(self.e2)!r}; got loss {loss!r}",
                loss,
            )

    def value(self, loss):
        self.check_domain(loss)
        # ln(e^l - e2) = l + ln(1 - e2 e^-l), stable for large l
        return self.e1 * (loss + math.log1p(-self.e2 * math.exp(-loss)))

    def derivative(self, loss):
        self.check_domain(loss)
        return self.e1 / (1.0 - self.e2 * math.exp(-loss))

    def second_derivative(self, loss):
        self.check_domain(loss)
        r = self.e2 * math.exp(-loss)
        return -self.e1 * r / (1.0 - r) ** 2

    def to_string(self):
        return f"le:{self.e1!r},{self.e2!r}"


@dataclass(frozen=True)
class PowerHalfSquare(DeformationSpec):
    """``0.5 * l**2``: flattens the low-loss region (the counter-example)."""

    def value(self, loss):
        self.check_domain(loss)
        return 0.5 * loss * loss

    def derivative(self, loss):
        self.check_domain(loss)
        return float(loss)

    def second_derivative(self, loss):
        self.check_domain(loss)
        return 1.0

    def to_string(self):
        return "halfsq"


def vdm_value(spec: DeformationSpec, loss: float) -> float:
    return spec.value(loss)


def vdm_derivative(spec: DeformationSpec, loss: float) -> float:
    return spec.derivative(loss)


def derivative_curve(spec: DeformationSpec, loss_grid: Iterable[float]) -> list[tuple[float, float]]:
    """Pairs ``(l, delta'(l))`` over an ascending grid."""
    grid = [float(x) for x in loss_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("loss grid must be strictly ascending")
    return [(x, spec.derivative(x)) for x in grid]


_ARITY = {"identity": 0, "halfsq": 0, "scale": 1, "le": 2, "ap": 4}


def parse_spec(text: str) -> DeformationSpec:
    """Parse ``identity``, ``scale:c``, ``ap:a1,a2,a3,a4``, ``le:e1,e2`` or ``halfsq``.

    Numbers use ``.`` as decimal separator regardless of locale.
    """
    raw = text.strip()
    name, _, args = raw.partition(":")
    name = name.strip().lower()
    if name not in _ARITY:
        raise InvalidSpec(f"unknown VDM family {name!r} in {text!r}")
    tokens = [t.strip() for t in args.split(",")] if args.strip() else []
    if len(tokens) != _ARITY[name]:
        raise InvalidSpec(f"{name} takes {_ARITY[name]} coefficient(s), got {len(tokens)} in {text!r}")
    values = []
    for tok in tokens:
        try:
            values.append(float(tok))
        except ValueError:
            raise InvalidSpec(f"bad number {tok!r} in {text!r}") from None
    if name == "identity":
        return Identity()
    if name == "halfsq":
        return PowerHalfSquare()
    if name == "scale":
        return Scale(*values)
    if name == "le":
        return LogExp(*values)
    return ArctanPower(*values)
