"""Non-increasing interaction kernels K: [0, 1] -> [0, 1] evaluated on topological ranks."""
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DomainError

VARIANTS = ("indicator", "linear", "quadratic", "two_point", "constant")


@dataclass(frozen=True)
class KernelSpec:
    """Interaction kernel applied to a normalized rank.

    Use the constructors (:meth:`indicator`, :meth:`linear`, ...) rather than
    filling the fields by hand; only the fields of the chosen variant are read.

    ``constant`` is not one of the modelling kernels. It exists so that the
    limiting cases K = 0 (free transport) and K = 1 (all-to-all) can be
    expressed directly in tests and sweeps.
    """

    variant: str
    threshold: int = 0
    population: int = 1
    value_at_two_thirds: float = 1.0
    value_at_one: float = 0.0
    value: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "indicator":
            if self.population < 1 or self.threshold < 0:
                raise ConfigError("indicator kernel needs threshold >= 0 and population >= 1")
        if self.variant == "two_point":
            a, b = self.value_at_two_thirds, self.value_at_one
            if not (0.0 <= b <= a <= 1.0):
                raise ConfigError("two_point kernel needs 0 <= K(1) <= K(2/3) <= 1")
        if self.variant == "constant" and not 0.0 <= self.value <= 1.0:
            raise ConfigError("constant kernel value must lie in [0, 1]")

    @classmethod
    def indicator(cls, threshold, population):
        """1 on [0, threshold/population], 0 beyond (closed on the right)."""
        return cls("indicator", threshold=int(threshold), population=int(population))

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def quadratic(cls):
        return cls("quadratic")

    @classmethod
    def two_point(cls, value_at_two_thirds=1.0, value_at_one=0.0):
        return cls("two_point", value_at_two_thirds=float(value_at_two_thirds),
                   value_at_one=float(value_at_one))

    @classmethod
    def constant(cls, value):
        return cls("constant", value=float(value))

    @classmethod
    def from_name(cls, name, *, m_bar=None, n=None):
        """Build a kernel from its config name.

        ``"indicator"`` additionally needs ``m_bar`` and ``n``; ``"zero"`` and
        ``"one"`` are shorthands for the constant kernels.
        """
        key = str(name).lower().replace("-", "_")
        if key in ("linear", "k1"):
            return cls.linear()
        if key in ("quadratic", "k2"):
            return cls.quadratic()
        if key in ("two_point", "twopoint"):
            return cls.two_point()
        if key == "zero":
            return cls.constant(0.0)
        if key == "one":
            return cls.constant(1.0)
        if key == "indicator":
            if m_bar is None or n is None:
                raise ConfigError("indicator kernel needs m_bar and n")
            return cls.indicator(m_bar, n)
        raise ConfigError(f"unknown kernel name {name!r}")

    @property
    def name(self):
        return self.variant

    def __call__(self, m):
        return eval_kernel(self, m)


def eval_kernel(spec, m):
    """Evaluate ``spec`` at the rank fraction(s) ``m``.

    Accepts scalars or arrays; returns the same shape. Values outside [0, 1]
    raise :class:`DomainError`.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError("kernel argument must lie in [0, 1]")
    v = spec.variant
    if v == "linear":
        out = 1.0 - arr
    elif v == "quadratic":
        out = (1.0 - arr) ** 2
    elif v == "indicator":
        # compare counts, not fractions, so m = threshold/population is exactly inside
        out = np.where(arr * spec.population <= spec.threshold * (1 + 1e-12), 1.0, 0.0)
    elif v == "two_point":
        out = np.interp(arr, [0.0, 2.0 / 3.0, 1.0],
                        [1.0, spec.value_at_two_thirds, spec.value_at_one])
        out = np.clip(out, 0.0, 1.0)
    else:
        out = np.full_like(arr, spec.value)
    if np.ndim(m) == 0:
        return float(out)
    return out
