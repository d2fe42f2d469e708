#!/usr/bin/env python3
"""High-precision reference values for the rotating-frame vector field.

Implements the equations of motion, effective potential, Jacobi constant,
state Jacobian and equilibrium conditions independently of the C++ code
(mpmath, 50 digits) and prints literals that are frozen into tests/test_dynamics.cpp.
"""
import mpmath as mp

mp.mp.dps = 50

MU = mp.mpf("1.215059e-2")


def distances(x, y, z):
    d = mp.sqrt((x + MU) ** 2 + y ** 2 + z ** 2)
    r = mp.sqrt((x - 1 + MU) ** 2 + y ** 2 + z ** 2)
    return d, r


def derivative(s):
    x, y, z, vx, vy, vz = s
    d, r = distances(x, y, z)
    ax = 2 * vy + x - (1 - MU) * (x + MU) / d ** 3 - MU * (x - 1 + MU) / r ** 3
    ay = -2 * vx + y - (1 - MU) * y / d ** 3 - MU * y / r ** 3
    az = -(1 - MU) * z / d ** 3 - MU * z / r ** 3
    return [vx, vy, vz, ax, ay, az]


def potential(s):
    x, y, z = s[0], s[1], s[2]
    d, r = distances(x, y, z)
    return (x ** 2 + y ** 2) / 2 + (1 - MU) / d + MU / r


def jacobi(s):
    v2 = s[3] ** 2 + s[4] ** 2 + s[5] ** 2
    return 2 * potential(s) - v2


def jacobian(s):
    # Differentiate the full vector field numerically at high precision.
    n = 6
    h = mp.mpf("1e-20")
    cols = []
    for j in range(n):
        sp = list(s)
        sm = list(s)
        sp[j] += h
        sm[j] -= h
        fp = derivative(sp)
        fm = derivative(sm)
        cols.append([(fp[i] - fm[i]) / (2 * h) for i in range(n)])
    return [[cols[j][i] for j in range(n)] for i in range(n)]


def axis_balance(x):
    d = abs(x + MU)
    r = abs(x - 1 + MU)
    return x - (1 - MU) * (x + MU) / d ** 3 - MU * (x - 1 + MU) / r ** 3


def collinear(lo, hi):
    return mp.findroot(axis_balance, (lo + hi) / 2, solver="bisect", x0=(lo, hi) if False else None) if False else mp.findroot(axis_balance, [lo, hi], solver="anderson")


STATES = [
    ("near L1, planar, moving", [mp.mpf("0.82"), mp.mpf("0.05"), mp.mpf("0.0"),
                                 mp.mpf("0.01"), mp.mpf("0.15"), mp.mpf("0.0")]),
    ("spatial, near secondary", [mp.mpf("1.05"), mp.mpf("-0.03"), mp.mpf("0.08"),
                                 mp.mpf("-0.2"), mp.mpf("0.05"), mp.mpf("0.1")]),
    ("outer region", [mp.mpf("-1.1"), mp.mpf("0.4"), mp.mpf("-0.2"),
                      mp.mpf("0.3"), mp.mpf("-0.1"), mp.mpf("0.05")]),
]


def fmt(v):
    return mp.nstr(v, 17, strip_zeros=False)


def main():
    for name, s in STATES:
        print(f"// {name}")
        print("state:", ", ".join(fmt(c) for c in s))
        print("deriv:", ", ".join(fmt(c) for c in derivative(s)))
        print("U:", fmt(potential(s)))
        print("C:", fmt(jacobi(s)))
        print()

    print("// jacobian at first state, row-major")
    jac = jacobian(STATES[0][1])
    for row in jac:
        print(", ".join(fmt(v) for v in row) + ",")
    print()

    x1 = collinear(mp.mpf("0.5"), mp.mpf("1") - MU - mp.mpf("1e-4"))
    x2 = collinear(mp.mpf("1") - MU + mp.mpf("1e-4"), mp.mpf("1.5"))
    x3 = collinear(mp.mpf("-1.5"), -MU - mp.mpf("0.5"))
    print("L1 x:", fmt(x1), " C:", fmt(jacobi([x1, 0, 0, 0, 0, 0])))
    print("L2 x:", fmt(x2), " C:", fmt(jacobi([x2, 0, 0, 0, 0, 0])))
    print("L3 x:", fmt(x3), " C:", fmt(jacobi([x3, 0, 0, 0, 0, 0])))
    l4 = [mp.mpf("0.5") - MU, mp.sqrt(3) / 2, 0, 0, 0, 0]
    print("L4 C:", fmt(jacobi(l4)))
    print("L4 residual:", fmt(max(abs(v) for v in derivative(l4)[3:])))


if __name__ == "__main__":
    main()
