"""Sparse polynomial test functions with exact partial derivatives.

A :class:`TestFunction` is a finite sum of monomial terms ``c * x**px * y**py``,
optionally multiplied by the indicator of a half-plane.  Derivatives of the
polynomial part are exact (term-wise power rule); the indicator, when present,
simply multiplies the differentiated polynomial.  All evaluation methods accept
scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Ties within this tolerance of the half-plane boundary count as inside the
# closed region (and are excluded from its complement).
INDICATOR_TIE_TOL = 1e-9


@dataclass(frozen=True)
class HalfPlane:
    """Indicator of the closed region ``x/x_scale - y/y_scale <= offset``.

    With ``complement=True`` the open opposite region is selected; boundary
    ties always belong to the closed side.
    """

    x_scale: float
    y_scale: float
    offset: float
    complement: bool = False

    def __post_init__(self) -> None:
        if not (self.x_scale > 0 and self.y_scale > 0):
            raise ValueError("half-plane scales must be positive")

    def mask(self, x, y):
        inside = (np.asarray(x) / self.x_scale - np.asarray(y) / self.y_scale
                  <= self.offset + INDICATOR_TIE_TOL)
        return ~inside if self.complement else inside

    def flip(self) -> "HalfPlane":
        return HalfPlane(self.x_scale, self.y_scale, self.offset, not self.complement)


@dataclass(frozen=True)
class TestFunction:
    """Polynomial in (x, y), optionally weighted by a half-plane indicator.

    ``terms`` maps each monomial ``(px, py)`` to its coefficient; the tuple is
    kept sorted so equal functions compare equal.  Instances are immutable and
    safe to share across threads.
    """

    terms: tuple[tuple[int, int, float], ...]
    region: HalfPlane | None = None

    @staticmethod
    def from_coeffs(coeffs: dict[tuple[int, int], float],
                    region: HalfPlane | None = None) -> "TestFunction":
        terms = tuple(sorted((px, py, float(c)) for (px, py), c in coeffs.items()
                             if c != 0.0))
        for px, py, _ in terms:
            if px < 0 or py < 0:
                raise ValueError("monomial powers must be nonnegative integers")
        return TestFunction(terms, region)

    @staticmethod
    def monomial(px: int, py: int, coeff: float = 1.0) -> "TestFunction":
        return TestFunction.from_coeffs({(px, py): coeff})

    @staticmethod
    def constant(value: float) -> "TestFunction":
        return TestFunction.from_coeffs({(0, 0): value})

    @property
    def coeffs(self) -> dict[tuple[int, int], float]:
        return {(px, py): c for px, py, c in self.terms}

    @property
    def degree(self) -> int:
        return max((px + py for px, py, _ in self.terms), default=0)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for px, py, c in self.terms:
            out += c * x**px * y**py
        if self.region is not None:
            out = np.where(self.region.mask(x, y), out, 0.0)
        return out if out.shape else float(out)

    def diff(self, nx: int = 0, ny: int = 0) -> "TestFunction":
        """Exact term-wise partial derivative of order (nx, ny)."""
        coeffs: dict[tuple[int, int], float] = {}
        for px, py, c in self.terms:
            if px < nx or py < ny:
                continue
            for _ in range(nx):
                c *= px
                px -= 1
            for _ in range(ny):
                c *= py
                py -= 1
            coeffs[px, py] = coeffs.get((px, py), 0.0) + c
        return TestFunction.from_coeffs(coeffs, self.region)

    def dx(self, x, y):
        return self.diff(nx=1)(x, y)

    def dy(self, x, y):
        return self.diff(ny=1)(x, y)

    def dxx(self, x, y):
        return self.diff(nx=2)(x, y)

    def dxxx(self, x, y):
        return self.diff(nx=3)(x, y)

    def dyy(self, x, y):
        return self.diff(ny=2)(x, y)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if self.region != other.region:
            raise ValueError("cannot add test functions with different regions")
        coeffs = self.coeffs
        for key, c in other.coeffs.items():
            coeffs[key] = coeffs.get(key, 0.0) + c
        return TestFunction.from_coeffs(coeffs, self.region)

    def __mul__(self, scalar: float) -> "TestFunction":
        return TestFunction.from_coeffs(
            {(px, py): c * scalar for px, py, c in self.terms}, self.region)

    __rmul__ = __mul__

    def shifted(self, constant: float) -> "TestFunction":
        return self + TestFunction.constant(constant)

    def term_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Powers (k, 2) and coefficients (k,) for kernel-side evaluation."""
        if not self.terms:
            return np.zeros((1, 2), dtype=np.int64), np.zeros(1)
        powers = np.array([[px, py] for px, py, _ in self.terms], dtype=np.int64)
        coeffs = np.array([c for _, _, c in self.terms])
        return powers, coeffs


# Named performance functions accepted by the experiment planner and the CLI.
FUNCTION_REGISTRY: dict[str, TestFunction] = {
    "x": TestFunction.monomial(1, 0),
    "y": TestFunction.monomial(0, 1),
    "x2": TestFunction.monomial(2, 0),
    "y2": TestFunction.monomial(0, 2),
    "xy": TestFunction.monomial(1, 1),
    "x2+y2": TestFunction.from_coeffs({(2, 0): 1.0, (0, 2): 1.0}),
}

MAX_PERFORMANCE_DEGREE = 3


def parse_function(spec: str) -> TestFunction:
    """Resolve a registry name or a ``poly:px,py:c;...`` coefficient map.

    Performance functions are capped at total degree 3, matching the growth
    condition under which the chain/diffusion comparison is valid.
    """
    spec = spec.strip()
    if spec in FUNCTION_REGISTRY:
        return FUNCTION_REGISTRY[spec]
    if spec.startswith("poly:"):
        coeffs: dict[tuple[int, int], float] = {}
        for chunk in spec[len("poly:"):].split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                powers, coeff = chunk.rsplit(":", 1)
                px_s, py_s = powers.split(",")
                px, py = int(px_s), int(py_s)
                c = float(coeff)
            except ValueError as exc:
                raise ValueError(f"bad polynomial term {chunk!r}; "
                                 "expected 'px,py:coeff'") from exc
            if px < 0 or py < 0:
                raise ValueError(f"negative power in term {chunk!r}")
            if px + py > MAX_PERFORMANCE_DEGREE:
                raise ValueError(
                    f"term {chunk!r} exceeds total degree {MAX_PERFORMANCE_DEGREE}")
            coeffs[px, py] = coeffs.get((px, py), 0.0) + c
        if not coeffs:
            raise ValueError("empty polynomial spec")
        return TestFunction.from_coeffs(coeffs)
    raise ValueError(f"unknown performance function {spec!r}; "
                     f"use one of {sorted(FUNCTION_REGISTRY)} or 'poly:...'")
