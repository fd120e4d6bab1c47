#!/usr/bin/env python3
"""Independent reference values for the unit tests.

Everything here is recomputed from first principles with numpy/scipy/mpmath
and shares no code with the library. Run it to regenerate
tests/unit/frozen_oracles.hpp; the header is checked in so the C++ build does
not depend on Python.
"""

import sys
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy import stats

mp.mp.dps = 40
MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1


# --- closed forms for m = 1 two-point laws ---------------------------------

def two_point(p1, p2):
    a, b = (1 - p1) / p1, (1 - p2) / p2
    lam = (mp.log(a) + mp.log(b)) / 2
    r = lambda alpha: (mp.power(a, alpha) + mp.power(b, alpha)) / 2
    s = mp.findroot(lambda x: r(x) - 1, (mp.mpf("0.01"), mp.mpf(20)),
                    solver="bisect")
    return lam, r, s


# --- splitmix64 / Philox4x32-10, written out from their definitions -------

def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_key(seed, domain, salt=0):
    inner = splitmix64((domain + 0x632BE59BD9B4E019 * salt) & MASK64)
    return splitmix64(seed ^ inner)


def philox_block(ctr, key):
    c = list(ctr)
    k0, k1 = key
    for rnd in range(10):
        if rnd:
            k0 = (k0 + 0x9E3779B9) & MASK32
            k1 = (k1 + 0xBB67AE85) & MASK32
        p0 = 0xD2511F53 * c[0]
        p1 = 0xCD9E8D57 * c[2]
        c = [((p1 >> 32) ^ c[1] ^ k0) & MASK32, p1 & MASK32,
             ((p0 >> 32) ^ c[3] ^ k1) & MASK32, p0 & MASK32]
    return c


def first_uniform(key, stream):
    out = philox_block([0, 0, stream & MASK32, (stream >> 32) & MASK32],
                       [key & MASK32, key >> 32])
    x = (out[1] << 32) | out[0]
    return ((x >> 11) + 0.5) * 2.0 ** -53


# --- constant strip environment -------------------------------------------

def stochastic_zeta(P, Q, R):
    """Stochastic solution of Q z^2 - (I-R) z + P = 0 from the quadratic
    eigenproblem: eigenvalue 1 plus the m-1 smallest-modulus other roots."""
    m = P.shape[0]
    I = np.eye(m)
    Qi = np.linalg.inv(Q)
    L = np.block([[np.zeros((m, m)), I], [-Qi @ P, Qi @ (I - R)]])
    mu, Z = np.linalg.eig(L)
    one = int(np.argmin(np.abs(mu - 1.0)))
    rest = [k for k in np.argsort(np.abs(mu)) if k != one][: m - 1]
    pick = [one] + rest
    X = Z[:m, pick]
    return (X @ np.diag(mu[pick]) @ np.linalg.inv(X)).real


def constant_strip(P, Q, R):
    m = P.shape[0]
    I = np.eye(m)
    z = stochastic_zeta(P, Q, R)
    # Cross-check: fixed-point iteration kept on the stochastic matrices.
    y = np.full((m, m), 1.0 / m)
    for _ in range(10000):
        y = np.linalg.solve(I - Q @ y - R, P)
        y /= y.sum(axis=1, keepdims=True)
    assert np.abs(y - z).max() < 1e-12, (y, z)
    assert np.abs(z - np.linalg.solve(I - Q @ z - R, P)).max() < 1e-12
    minv = np.linalg.inv(I - Q @ z - R)
    A = minv @ Q
    u = minv @ np.ones(m)
    ev, evec = np.linalg.eig(A)
    k = np.argmax(ev.real)
    lam = ev[k].real
    v = np.abs(evec[:, k].real)
    v /= v.max()
    evl, evecl = np.linalg.eig(z.T)
    pi = np.abs(evecl[:, np.argmin(np.abs(evl - 1))].real)
    pi /= pi.sum()
    g = pi @ np.linalg.inv(I - A)           # g = pi + g A
    rho = g @ u
    rho_y = g @ minv                        # rho_{n,y} = g minv e_y
    w = pi @ v / (1 - lam)
    # G = I + z G A, vec(G) = (I - A^T kron z)^-1 vec(I)
    Gv = np.linalg.solve(np.eye(m * m) - np.kron(A.T, z),
                         np.eye(m).reshape(-1, order="F"))
    G = Gv.reshape(m, m, order="F")
    F = np.array([G @ minv[:, y] for y in range(m)]).T  # F[i, y]
    return dict(zeta=z, A=A, u=u, lam=lam, v=v, pi=pi, rho=rho,
                rho_y=rho_y, w=w, F=F)


# --- bounded-jump embedding on Z with jumps |k| <= m ------------------------

def embed(jumps, m):
    P = np.zeros((m, m)); Q = np.zeros((m, m)); R = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            # site (n, i) is x = n m + i; target (n + d, j) is x + d m + j - i
            for d, M in ((1, P), (-1, Q), (0, R)):
                k = d * m + j - i
                if -m <= k <= m:
                    M[i, j] += jumps[i][k + m]
    return P, Q, R


def fmt(x):
    return repr(float(x))


def arr(a):
    return "{" + ", ".join(fmt(x) for x in np.ravel(a)) + "}"


def main(out):
    lines = ["// Generated by tests/oracles/derive_oracles.py; do not edit.",
             "#pragma once", "", "namespace oracle {", ""]
    lam, r, s = two_point(0.8, 0.3)
    lines += [f"inline constexpr double kLstarLambda = {fmt(lam)};",
              f"inline constexpr double kLstarS = {fmt(s)};"]
    for a, name in ((0.25, "025"), (0.5, "05"), (1.0, "1")):
        lines.append(f"inline constexpr double kLstarR{name} = {fmt(r(a))};")
    _, _, s2 = two_point(0.7, 0.45)
    lines.append(f"inline constexpr double kSecondLawS = {fmt(s2)};")

    key = derive_key(1, 1)
    u = [first_uniform(key, n) for n in range(20)]
    atoms = [0 if x < 0.5 else 1 for x in u]
    lines.append(f"inline constexpr int kLstarSeed1Atoms[20] = "
                 f"{{{', '.join(map(str, atoms))}}};")
    lines.append(f"inline constexpr double kLayerUniformSeed1[20] = {arr(u)};")

    P = np.array([[.5, .1], [.2, .35]])
    Q = np.array([[.1, .05], [.05, .15]])
    R = np.array([[.15, .1], [.1, .15]])
    c = constant_strip(P, Q, R)
    lines += ["", "// Constant environment P = [[.5,.1],[.2,.35]],",
              "// Q = [[.1,.05],[.05,.15]], R = [[.15,.1],[.1,.15]]."]
    for k in ("zeta", "A", "u", "v", "pi", "rho_y", "F"):
        lines.append(f"inline constexpr double kConst_{k}[] = {arr(c[k])};")
    for k in ("lam", "rho", "w"):
        lines.append(f"inline constexpr double kConst_{k} = {fmt(c[k])};")

    P2 = np.array([[.15, .1], [.1, .2]])
    Q2 = np.array([[.35, .2], [.2, .3]])
    R2 = np.array([[.1, .1], [.1, .1]])
    c2 = constant_strip(P2, Q2, R2)
    lines.append(f"inline constexpr double kConstB_lam = {fmt(c2['lam'])};")

    jumps = [[.25, .25, 0, .25, .25]] * 2
    Pe, Qe, Re = embed(jumps, 2)
    IR = np.linalg.inv(np.eye(2) - Re)
    lines += ["", "// m = 2 embedding of p(+-1) = p(+-2) = 1/4, row-major."]
    lines.append(f"inline constexpr double kEmbedP[] = {arr(Pe)};")
    lines.append(f"inline constexpr double kEmbedQ[] = {arr(Qe)};")
    lines.append(f"inline constexpr double kEmbedR[] = {arr(Re)};")
    lines.append(f"inline constexpr double kEmbedMinEntry = "
                 f"{fmt(min((IR @ Pe).min(), (IR @ Qe).min()))};")

    # KS reference: Kolmogorov tail at Stephens-corrected argument.
    lines += ["", "// Kolmogorov tail P(K > x) at a few points."]
    xs = [0.3, 0.8, 1.0, 1.18, 1.5, 2.0]
    lines.append(f"inline constexpr double kKolmogorovX[] = {arr(xs)};")
    lines.append(f"inline constexpr double kKolmogorovSf[] = "
                 f"{arr([stats.kstwobign.sf(x) for x in xs])};")
    lines.append(f"inline constexpr double kChi2Sf_7_3 = "
                 f"{fmt(stats.chi2.sf(7.0, 3))};")
    lines.append(f"inline constexpr double kChi2Sf_150_120 = "
                 f"{fmt(stats.chi2.sf(150.0, 120))};")
    lines += ["", "}  // namespace oracle", ""]
    Path(out).write_text("\n".join(lines))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         str(Path(__file__).resolve().parent.parent / "unit" /
             "frozen_oracles.hpp"))
