"""Closed-form scalar expressions in the periodic lattice coordinates.

Scenario files describe metrics and conformal factors as small arithmetic
expressions (``+``, ``*``, ``sin``, ``cos``, ``exp`` of linear forms in
``x1 .. x4``).  They are parsed with sympy against a whitelist and evaluated
on the grid with :func:`sympy.lambdify`.
"""
import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .errors import ScenarioError

COORDS = sp.symbols("x1:5", real=True)
_ALLOWED = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "pi": sp.pi,
    **{str(x): x for x in COORDS},
}
# lattice periods are exposed as L1 .. L4 and substituted at evaluation time
PERIODS = sp.symbols("L1:5", positive=True)
_ALLOWED.update({str(L): L for L in PERIODS})


def parse(text) -> sp.Expr:
    """Parse an expression string (or number) into a sympy expression."""
    if isinstance(text, sp.Expr):
        return text
    if isinstance(text, (int, float)):
        return sp.nsimplify(text)
    try:
        expr = parse_expr(str(text), local_dict=dict(_ALLOWED), global_dict={"Integer": sp.Integer,
                          "Float": sp.Float, "Rational": sp.Rational, "Symbol": sp.Symbol},
                          transformations=standard_transformations)
    except Exception as exc:  # sympy raises a zoo of exception types
        raise ScenarioError(f"cannot parse expression {text!r}: {exc}") from exc
    unknown = expr.free_symbols - set(COORDS) - set(PERIODS)
    if unknown:
        raise ScenarioError(f"expression {text!r} uses unknown symbols {sorted(map(str, unknown))}")
    return expr


def evaluate(expr, chart) -> np.ndarray:
    """Evaluate ``expr`` on every lattice point of ``chart``; returns an array of shape ``chart.dims``."""
    expr = parse(expr).subs(dict(zip(PERIODS, chart.periods)))
    fn = sp.lambdify(COORDS, expr, modules="numpy")
    X = chart.coordinates()
    out = np.asarray(fn(*X), dtype=float)
    return np.broadcast_to(out, chart.dims).copy()


def wirtinger(expr, k: int, conj: bool) -> sp.Expr:
    """d/dz_k (or d/dzbar_k) with z_1 = x1 + i x2 and z_2 = x3 + i x4."""
    x, y = COORDS[2 * k], COORDS[2 * k + 1]
    sign = 1 if conj else -1
    return (sp.diff(expr, x) + sign * sp.I * sp.diff(expr, y)) / 2


THETA = sp.Symbol("theta", real=True)


def parse_profile(text) -> sp.Expr:
    """Parse an axisymmetric profile in the polar angle ``theta`` (0 at the north pole)."""
    if isinstance(text, sp.Expr):
        expr = text
    else:
        try:
            expr = parse_expr(str(text), local_dict={"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "pi": sp.pi,
                                                     "theta": THETA},
                              global_dict={"Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational,
                                           "Symbol": sp.Symbol},
                              transformations=standard_transformations)
        except Exception as exc:
            raise ScenarioError(f"cannot parse profile {text!r}: {exc}") from exc
    unknown = expr.free_symbols - {THETA}
    if unknown:
        raise ScenarioError(f"profile {text!r} uses unknown symbols {sorted(map(str, unknown))}")
    return expr
