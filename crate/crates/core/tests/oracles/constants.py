"""High-precision reference values for the explicit constants.

Run with `python3 constants.py`; prints Rust tuples pasted into tests/constants_oracle.rs.
"""
from mpmath import mp, mpf, pi, e, gamma, log, exp, inf

mp.dps = 50

CASES = [
    (1, 4, 4, 1, 1),
    (1, inf, 4, 1, 2),
    (2, 4, 4, 1, 2),
    (2, 8, 8, mpf("0.5"), mpf("1.5")),
    (3, 4, 6, 1, 1),
    (3, 10, 10, 2, 3),
    (2, inf, inf, 1, 1),
    (1, mpf("2.5"), 3, mpf("0.7"), mpf("1.2")),
    (3, 6, 12, mpf("0.25"), 4),
    (2, 3, 5, mpf("1.5"), mpf("1.1")),
    (1, mpf("1.5"), 2, 1, 1),
    (4, 5, 20, 1, 2),
]


def conj(p):
    return mpf(1) if p == inf else p / (p - 1)


def inv(x):
    return mpf(0) if x == inf else 1 / mpf(x)


def bundle(d, p, q, a0, c0):
    d, a0, c0 = mpf(d), mpf(a0), mpf(c0)
    pc = conj(p)
    gam = 2 - 2 * inv(p) - d * inv(q)
    beta = 49 * a0 / (200 * d)
    ball = pi ** (d / 2) / gamma(d / 2 + 1)
    delta = mpf(13) / 1568 * (98 * pi) ** (-d / 2) * d ** (d / 2 + 1) * exp(-d * c0) * ball
    expo = 1 / pc - d * inv(q) / 2
    pre = (a0 * c0) ** (d * inv(q) / 2) * (1 - d * pc * inv(q) / 2) ** (-1 / pc)
    amp_stated = pre * (mpf(25) / 64 * a0 ** 2 / (2 * d)) ** expo
    amp_proof = pre * (mpf(49) / 100 * a0 / (2 * d)) ** expo
    alpha = min(log(1 / (1 - delta)) / log(4), gam, mpf(1) / 2)
    k1 = a0 ** (d * inv(q) / 2) / (1 - d * pc * inv(q) / 2) ** (1 - inv(p))
    return gam, beta, delta, amp_stated, amp_proof, alpha, k1


def lit(x):
    return "f64::INFINITY" if x == inf else mp.nstr(mpf(x), 17)


for case in CASES:
    vals = bundle(*case)
    ins = ", ".join(lit(x) for x in case)
    outs = ", ".join(mp.nstr(v, 20) for v in vals)
    print(f"    ([{ins}], [{outs}]),")
