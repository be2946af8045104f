# Reference values for the dynamic tests (scipy solve_bvp / quad / brentq).
import numpy as np
from scipy.integrate import solve_bvp, quad
from scipy.optimize import brentq

a, b, cb, c0, g, d, r, T = 10.0, 1.0, 2.0, 0.0, 0.02, 0.1, 0.05, 10.0
ae, ce = a - c0, cb - c0
M = np.array([[3 * g / (4 * b) - d, 1 / (4 * b)], [-g * g / (4 * b), r + d - 3 * g / (4 * b)]])
c = np.array([(ae - 3 * ce) / (4 * b), g * (ae + ce) / (4 * b)])
ev = np.sort(np.linalg.eigvals(M).real)
print("s1 = %.10f s2 = %.10f" % tuple(ev))
t = np.linspace(0, T, 401)
sol = solve_bvp(lambda t, y: M @ y + c[:, None], lambda ya, yb: np.array([ya[0], yb[1]]), t,
                np.zeros((2, t.size)), tol=1e-12, max_nodes=100000)
print("lambda(0) = %.10f" % sol.sol(0)[1])
X = lambda x: ae + ce - g * x
eqf = lambda s: (X(sol.sol(s)[0]) ** 2 - sol.sol(s)[1] ** 2) / (8 * b)
dff = lambda s: (3 * X(sol.sol(s)[0]) - sol.sol(s)[1]) ** 2 / (64 * b)
Js = quad(lambda s: np.exp(-r * s) * eqf(s), 0, T, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
Jt = lambda k: quad(lambda s: np.exp(-(r + k) * s) * dff(s), 0, T, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
print("J* = %.10f" % Js)
print("k_min = %.10f" % brentq(lambda k: Js - Jt(k), 1e-6, 1.0, xtol=1e-13))
