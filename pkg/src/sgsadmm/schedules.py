"""Summable tolerance schedules for the inexact subproblem solves."""

from __future__ import annotations

from dataclasses import dataclass

from scipy.special import zeta

__all__ = ["ToleranceSchedule"]


@dataclass(frozen=True)
class ToleranceSchedule:
    """Nonnegative summable sequence eps_k, k = 0, 1, ...

    Kinds: "zero" (identically zero), "geometric" (eps0 * ratio^k with
    ratio in (0, 1)), and "power" (eps0 * (k+1)^-exponent with exponent
    > 1).  The series sum and the sum of squares are available in
    closed form.
    """

    kind: str = "zero"
    eps0: float = 0.0
    ratio: float = 0.5
    exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in ("zero", "geometric", "power"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind != "zero":
            if self.eps0 < 0:
                raise ValueError("eps0 must be >= 0")
            if self.kind == "geometric" and not 0.0 < self.ratio < 1.0:
                raise ValueError("geometric ratio must be in (0, 1)")
            if self.kind == "power" and self.exponent <= 1.0:
                raise ValueError("power exponent must be > 1 for summability")

    @classmethod
    def zero(cls) -> "ToleranceSchedule":
        return cls("zero")

    @classmethod
    def geometric(cls, eps0: float, ratio: float) -> "ToleranceSchedule":
        return cls("geometric", eps0=float(eps0), ratio=float(ratio))

    @classmethod
    def power(cls, eps0: float, exponent: float) -> "ToleranceSchedule":
        return cls("power", eps0=float(eps0), exponent=float(exponent))

    def __call__(self, k: int) -> float:
        if self.kind == "zero" or self.eps0 == 0.0:
            return 0.0
        if self.kind == "geometric":
            return self.eps0 * self.ratio ** k
        return self.eps0 * float(k + 1) ** (-self.exponent)

    def total(self) -> float:
        """Sum of eps_k over all k."""
        if self.kind == "zero" or self.eps0 == 0.0:
            return 0.0
        if self.kind == "geometric":
            return self.eps0 / (1.0 - self.ratio)
        return self.eps0 * float(zeta(self.exponent))

    def total_squares(self) -> float:
        """Sum of eps_k^2 over all k."""
        if self.kind == "zero" or self.eps0 == 0.0:
            return 0.0
        if self.kind == "geometric":
            return self.eps0 ** 2 / (1.0 - self.ratio ** 2)
        return self.eps0 ** 2 * float(zeta(2.0 * self.exponent))

    def scaled(self, factor: float) -> "ToleranceSchedule":
        """Schedule with every term multiplied by a nonnegative factor."""
        if factor < 0:
            raise ValueError("scaling factor must be >= 0")
        if self.kind == "zero" or factor == 0.0:
            return ToleranceSchedule.zero()
        return ToleranceSchedule(self.kind, eps0=self.eps0 * factor,
                                 ratio=self.ratio, exponent=self.exponent)

    @classmethod
    def parse(cls, text: str) -> "ToleranceSchedule":
        """Parse "zero", "geom:<eps0>:<ratio>" or "pow:<eps0>:<exponent>"."""
        parts = text.strip().split(":")
        if parts[0] == "zero" and len(parts) == 1:
            return cls.zero()
        if parts[0] == "geom" and len(parts) == 3:
            return cls.geometric(float(parts[1]), float(parts[2]))
        if parts[0] == "pow" and len(parts) == 3:
            return cls.power(float(parts[1]), float(parts[2]))
        raise ValueError(f"cannot parse schedule spec {text!r}")
