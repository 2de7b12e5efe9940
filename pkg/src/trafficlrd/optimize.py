"""Derivative-free one-dimensional minimisation."""
import math

from .errors import NoConvergence

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(func, lo, hi, tol=1e-4, max_iter=200):
    """Minimise a unimodal ``func`` on ``[lo, hi]``.

    Stops once the bracket is narrower than ``tol`` and returns
    ``(x_best, f_best, iterations)``. Raises NoConvergence if ``max_iter``
    reductions do not get there.
    """
    if not hi > lo:
        raise ValueError("need lo < hi")
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    iterations = 0
    while b - a > tol:
        if iterations >= max_iter:
            raise NoConvergence(f"bracket still {b - a:.3g} wide after {max_iter} iterations")
        iterations += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)
    if fc <= fd:
        return c, fc, iterations
    return d, fd, iterations
