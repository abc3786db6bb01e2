"""High-precision reference values for fixtures/elliptic.json.

Everything here is computed with mpmath at 40 digits and shares no code
with the Rust crate. theta1 uses its own 60-term sine series and is
cross-checked against mpmath.jtheta; wp uses the theta-constant formula,
zeta the E2 (Eisenstein) form, g1 the Dedekind eta log-derivative.

Usage: python3 tools/oracle/oracle.py [out.json]
"""

import json
import sys
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40
PI = mp.pi
I = mp.mpc(0, 1)


def nome(tau):
    return mp.exp(I * PI * tau)


def theta1_series(z, tau, k=0, terms=60):
    """d^k/dz^k of 2 sum (-1)^m q^{(m+1/2)^2} sin((2m+1) pi z)."""
    s = mp.mpc(0)
    for m in range(terms):
        w = (2 * m + 1) * PI
        # k-th derivative of sin(w z) is w^k sin(w z + k pi/2)
        s += (-1) ** m * mp.exp(I * PI * tau * (m + mp.mpf(1) / 2) ** 2) * w**k * mp.sin(w * z + k * PI / 2)
    return 2 * s


def theta1(z, tau, k=0):
    a = theta1_series(z, tau, k)
    b = mp.jtheta(1, PI * z, nome(tau), k) * PI**k
    assert abs(a - b) <= mp.mpf(10) ** -30 * max(1, abs(a)), (z, tau, k)
    return a


def eta_logderiv(tau):
    """d/dtau log eta(tau) = (pi i/12) E2(tau)."""
    return PI * I / 12 * e2(tau)


def e2(tau):
    q2 = mp.exp(2 * PI * I * tau)
    s = mp.mpc(0)
    for n in range(1, 400):
        term = n * q2**n / (1 - q2**n)
        s += term
        if abs(term) < mp.mpf(10) ** -45:
            break
    return 1 - 24 * s


def g1(tau):
    return eta_logderiv(tau)


def wp(z, tau, k=0):
    """wp for the lattice Z + tau Z from theta constants, k-th derivative by mp.diff."""
    q = nome(tau)

    def f(x):
        w = PI * x
        t2 = mp.jtheta(2, 0, q)
        t3 = mp.jtheta(3, 0, q)
        t4w = mp.jtheta(4, w, q)
        t1w = mp.jtheta(1, w, q)
        return PI**2 * ((t2 * t3 * t4w / t1w) ** 2 - (t2**4 + t3**4) / 3)

    return f(z) if k == 0 else mp.diff(f, z, k)


def zeta_w(z, tau):
    g2 = PI**2 / 3 * e2(tau)
    q = nome(tau)
    ld = PI * mp.jtheta(1, PI * z, q, 1) / mp.jtheta(1, PI * z, q)
    return ld + g2 * z


# superpotential lambda and the generators at an explicit point


def lam(z, x, n):
    u, vs, vex, tau = x[0], list(x[1 : n + 1]), x[n + 1], x[n + 2]
    vs.append(-sum(vs))
    q = nome(tau)
    th = lambda w: mp.jtheta(1, PI * w, q)
    num = mp.exp(-2 * PI * I * u)
    for v in vs:
        num *= th(z - v + vex)
    return num / (th(z) ** n * th(z + (n + 1) * vex))


def phis(x, n):
    """phi_k = Laurent coefficient of lambda at z^{-k} for k = 1..n, phi_0 the constant term (n <= 3)."""
    # the quadrature nodes sit on a circle, so z = 0 is never evaluated
    c = mp.taylor(lambda z: z**n * lam(z, x, n), 0, n, method="quad", radius=mp.mpf("0.05"))
    return [c[n]] + [c[n - k] for k in range(1, n + 1)]


def intersection_form_v(n):
    d = n + 3
    g = mp.zeros(d, d)
    for i in range(n):
        for j in range(n):
            g[1 + i, 1 + j] = (1 if i == j else 0) - mp.mpf(1) / (n + 1)
    g[n + 1, n + 1] = -mp.mpf(1) / (n * (n + 1))
    g[0, n + 2] = 1
    g[n + 2, 0] = 1
    return g


def gphi(x, n):
    """g*(dphi_i, dphi_j) for the PhiChart coordinates (phi_0..phi_n, v_ex, tau)."""
    d = n + 3
    jac = mp.zeros(d, d)
    for a in range(d):
        h = mp.mpf(10) ** -12

        def along(s):
            y = list(x)
            y[a] = y[a] + s
            return phis(y, n)

        # central 4-point stencil at 40 digits: truncation ~h^4, far below double precision
        fp2, fp1, fm1, fm2 = along(2 * h), along(h), along(-h), along(-2 * h)
        for k in range(n + 1):
            jac[k, a] = (-fp2[k] + 8 * fp1[k] - 8 * fm1[k] + fm2[k]) / (12 * h)
    jac[n + 1, n + 1] = 1
    jac[n + 2, n + 2] = 1
    return jac * intersection_form_v(n) * jac.T


def pair(c):
    c = mp.mpc(c)
    return [float(c.real), float(c.imag)]


def record(fn, args, expected, tol):
    return {"fn": fn, "args": [pair(a) for a in args], "expected": pair(expected), "abs_tol": tol}


def main():
    out = []
    theta_cases = [
        (mp.mpf("0.3"), mp.mpc("0.3", "1.2"), range(0, 5)),
        (mp.mpf("0.25"), mp.mpc(0, 1), [0]),
        (mp.mpf("-0.25"), mp.mpc(0, 1), [0]),
        (mp.mpc("0.1", "0.2"), mp.mpc(0, 2), range(0, 3)),
        (mp.mpc("-0.37", "0.41"), mp.mpc("0.3", "1.2"), [1, 3]),
    ]
    for z, tau, ks in theta_cases:
        for k in ks:
            v = theta1(z, tau, k)
            out.append(record("theta1", [z, tau, k], v, 1e-13 * max(1.0, float(abs(v)))))
    for tau in [mp.mpc(0, 1), mp.mpc(0, 2), mp.mpc("0.3", "1.2"), mp.mpc(0, "1.3")]:
        # g1 through the theta series itself, and through eta
        direct = theta1(0, tau, 3) / (12 * PI * I * theta1(0, tau, 1))
        via_eta = g1(tau)
        assert abs(direct - via_eta) < mp.mpf(10) ** -30
        out.append(record("g1", [tau], direct, 1e-13))
        out.append(record("eta_logderiv", [tau], via_eta, 1e-13))
    wp_cases = [
        (mp.mpf("0.2"), mp.mpc(0, 1), [0]),
        (mp.mpc("0.31", "0.11"), mp.mpc(0, "1.3"), [0, 1]),
        (mp.mpc("0.3", "0.2"), mp.mpc("0.3", "1.2"), [0, 1, 2]),
    ]
    for z, tau, ks in wp_cases:
        for k in ks:
            v = wp(z, tau, k)
            out.append(record("wp", [z, tau, k], v, 1e-12 * max(1.0, float(abs(v)))))
    for z, tau in [(mp.mpf("0.2"), mp.mpc(0, 1)), (mp.mpf("0.27"), mp.mpc(0, "1.5")), (mp.mpc("0.3", "0.2"), mp.mpc("0.3", "1.2"))]:
        v = zeta_w(z, tau)
        out.append(record("zeta_w", [z, tau], v, 1e-12 * max(1.0, float(abs(v)))))

    points = [
        (2, [mp.mpc("0.05", "-0.1"), mp.mpc("0.21", "0.13"), mp.mpc("-0.17", "0.29"), mp.mpc("0.07", "0.19"), mp.mpc("0.3", "1.2")]),
        (3, [mp.mpc("-0.12", "0.04"), mp.mpc("0.23", "0.11"), mp.mpc("-0.31", "0.17"), mp.mpc("0.12", "-0.36"), mp.mpc("0.09", "0.27"), mp.mpc(0, 2)]),
    ]
    for n, x in points:
        g = gphi(x, n)
        d = n + 3
        scale = max(float(abs(g[i, j])) for i in range(d) for j in range(d))
        for i in range(d):
            for j in range(i, d):
                out.append(record("gphi", list(x) + [i, j], g[i, j], 1e-9 * scale))
        ph = phis(x, n)
        for k in range(n + 1):
            out.append(record("phi", list(x) + [k], ph[k], 1e-10 * max(1.0, float(abs(ph[k])))))

    path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[2] / "fixtures" / "elliptic.json"
    path.write_text("[\n" + ",\n".join(json.dumps(r) for r in out) + "\n]\n")
    print(f"wrote {len(out)} records to {path}")


if __name__ == "__main__":
    main()
