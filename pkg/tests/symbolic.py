"""Exact element matrices by symbolic integration (test oracle)."""
from __future__ import annotations

from fractions import Fraction

import sympy as sp

from pillarstokes.fem.elements import reference_nodes

X, Y = sp.symbols("x y")


def _basis(order: int):
    nodes = [tuple(sp.Rational(Fraction(float(c)).limit_denominator(1000)) for c in pt) for pt in reference_nodes(order)]
    monos = [X**a * Y**b for k in range(order + 1) for a in range(k, -1, -1) for b in [k - a]]
    V = sp.Matrix([[mono.subs({X: px, Y: py}) for mono in monos] for px, py in nodes])
    C = V.inv()
    return [sum(C[i, j] * monos[i] for i in range(len(monos))) for j in range(len(nodes))]


def element_matrices(vertices, order: int):
    """(mass, stiffness) on the triangle with rational ``vertices`` via the exact affine map."""
    (x0, y0), (x1, y1), (x2, y2) = [tuple(sp.Rational(Fraction(v).limit_denominator(10**6)) for v in p) for p in vertices]
    J = sp.Matrix([[x1 - x0, x2 - x0], [y1 - y0, y2 - y0]])
    det = J.det()
    Jinv_T = J.inv().T
    phi = _basis(order)
    grads = [Jinv_T * sp.Matrix([sp.diff(f, X), sp.diff(f, Y)]) for f in phi]

    def integrate(expr):
        # int_ref x^a y^b = a! b! / (a + b + 2)!
        poly = sp.Poly(sp.expand(expr), X, Y)
        total = sum(
            c * sp.factorial(a) * sp.factorial(b) / sp.factorial(a + b + 2) for (a, b), c in poly.terms()
        )
        return total * abs(det)

    n = len(phi)
    M = [[integrate(phi[i] * phi[j]) for j in range(n)] for i in range(n)]
    K = [[integrate((grads[i].T * grads[j])[0]) for j in range(n)] for i in range(n)]
    return M, K
