#!/usr/bin/env python3
"""Independent propagation references (scipy DOP853 at tight tolerance).

Values are frozen into tests/test_integrator.cpp.
"""
import numpy as np
from scipy.integrate import solve_ivp

MU = 1.215059e-2


def rhs(t, s):
    x, y, z, vx, vy, vz = s
    d = np.sqrt((x + MU) ** 2 + y * y + z * z)
    r = np.sqrt((x - 1 + MU) ** 2 + y * y + z * z)
    ax = 2 * vy + x - (1 - MU) * (x + MU) / d ** 3 - MU * (x - 1 + MU) / r ** 3
    ay = -2 * vx + y - (1 - MU) * y / d ** 3 - MU * y / r ** 3
    az = -(1 - MU) * z / d ** 3 - MU * z / r ** 3
    return [vx, vy, vz, ax, ay, az]


def jacobi(s):
    x, y, z, vx, vy, vz = s
    d = np.sqrt((x + MU) ** 2 + y * y + z * z)
    r = np.sqrt((x - 1 + MU) ** 2 + y * y + z * z)
    u = (x * x + y * y) / 2 + (1 - MU) / d + MU / r
    return 2 * u - (vx * vx + vy * vy + vz * vz)


def main():
    s0 = [0.83, 0.0, 0.01, 0.0, 0.18, 0.0]
    tf = 10.0
    sol = solve_ivp(rhs, (0.0, tf), s0, method="DOP853", rtol=1e-13, atol=1e-16,
                    dense_output=False)
    sf = sol.y[:, -1]
    print("s0 =", s0, " tf =", tf)
    print("final:", ", ".join(f"{v:.17g}" for v in sf))
    print("C0:", f"{jacobi(np.array(s0)):.17g}", " Cf:", f"{jacobi(sf):.17g}")


if __name__ == "__main__":
    main()
