"""Error function and its inverse.

Pure-Python scalar implementations with absolute error below 1e-15 on the
real line. ``erf`` uses the positive-term Maclaurin form for small arguments
and a Lentz-evaluated continued fraction for ``erfc`` in the tails.
"""

from __future__ import annotations

import math

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_SERIES_CUTOFF = 2.5
_MAX_TERMS = 500
_TINY = 1e-300


def _erf_series(x: float) -> float:
    # erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!
    # Every term is positive, so there is no cancellation.
    x2 = x * x
    term = x
    total = x
    for n in range(1, _MAX_TERMS):
        term *= 2.0 * x2 / (2 * n + 1)
        total += term
        if term < 1e-17 * total:
            break
    return _TWO_OVER_SQRT_PI * math.exp(-x2) * total


def _erfc_continued_fraction(x: float) -> float:
    # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    # evaluated with the modified Lentz algorithm; valid for x > 0.
    f = x
    c = x
    d = 0.0
    for n in range(1, _MAX_TERMS):
        a = 0.5 * n
        d = x + a * d
        d = _TINY if d == 0.0 else d
        c = x + a / c
        c = _TINY if c == 0.0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x * x) / (math.sqrt(math.pi) * f)


def erfc(x: float) -> float:
    """Complementary error function ``1 - erf(x)``, accurate in both tails."""
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x < 0.0:
        return 2.0 - erfc(-x)
    if x < _SERIES_CUTOFF:
        return 1.0 - _erf_series(x)
    if x > 27.3:
        return 0.0
    return _erfc_continued_fraction(x)


def erf(x: float) -> float:
    """Error function. Odd, total, with values in ``[-1, 1]``."""
    x = float(x)
    if math.isnan(x):
        return math.nan
    ax = abs(x)
    if ax < _SERIES_CUTOFF:
        value = _erf_series(ax)
    elif ax > 6.0:
        value = 1.0
    else:
        value = 1.0 - _erfc_continued_fraction(ax)
    return value if x >= 0.0 else -value


def _erf_inv_initial(y: float) -> float:
    # M. Giles' single-precision rational approximation; refined below.
    w = -math.log((1.0 - y) * (1.0 + y))
    if w < 5.0:
        w -= 2.5
        p = 2.81022636e-08
        for c in (3.43273939e-07, -3.5233877e-06, -4.39150654e-06,
                  0.00021858087, -0.00125372503, -0.00417768164,
                  0.246640727, 1.50140941):
            p = c + p * w
    else:
        w = math.sqrt(w) - 3.0
        p = -0.000200214257
        for c in (0.000100950558, 0.00134934322, -0.00367342844,
                  0.00573950773, -0.0076224613, 0.00943887047,
                  1.00167406, 2.83297682):
            p = c + p * w
    return p * y


def erf_inv(y: float) -> float:
    """Inverse error function on ``(-1, 1)``.

    Starts from a rational approximation and polishes it with Newton steps
    on :func:`erf` (using ``erfc`` for the residual in the tails so that
    arguments near +-1 keep their precision).

    Raises:
        ValueError: if ``|y| >= 1`` or ``y`` is NaN.
    """
    y = float(y)
    if not -1.0 < y < 1.0:
        raise ValueError(f"erf_inv is defined on (-1, 1), got {y!r}")
    if y == 0.0:
        return 0.0
    sign = 1.0 if y > 0 else -1.0
    ay = abs(y)
    x = abs(_erf_inv_initial(ay))
    for _ in range(8):
        if x < 1.0:
            residual = erf(x) - ay
        else:
            residual = (1.0 - ay) - erfc(x)
        slope = _TWO_OVER_SQRT_PI * math.exp(-x * x)
        if slope == 0.0:
            break
        step = residual / slope
        # Halley correction: erf'' = -2x erf'
        step /= 1.0 + x * step
        x -= step
        if abs(step) <= 1e-16 * max(1.0, x):
            break
    return sign * x
