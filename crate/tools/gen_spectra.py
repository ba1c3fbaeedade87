#!/usr/bin/env python3
"""Generate per-species absorption-coefficient spectra for the simulator.

The crate ingests precomputed k(f) tables; it never evaluates spectral
lines itself. This script produces those tables from the line-by-line
gaseous attenuation model of ITU-R P.676-12 Annex 1 (line tables in
tools/p676/, taken from the MIT-licensed `itur` package).

Each species file holds k_i(f) normalised per unit mole fraction, so that
the mixture coefficient is the ratio-weighted sum k(f) = sum_i m_i k_i(f).
Water vapour is evaluated at a reference fraction of 2.59 % (tropical sea
level) and divided by that fraction; the dry-air term (oxygen lines plus
the dry continuum) is attributed to O2 at 20.9 %. Species whose
contribution at standard-atmosphere mole fractions is negligible in this
band are written as zero spectra so mixture files stay complete.

Usage: python3 tools/gen_spectra.py [out_dir]
"""

import os
import sys

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
T_K = 273.15
P_HPA = 1013.25
F_MIN_GHZ = 100.0
F_MAX_GHZ = 1000.0
STEP_GHZ = 0.25
DB_PER_KM_TO_PER_M = np.log(10.0) / 10.0 / 1000.0

H2O_REF = 0.0259
O2_REF = 0.20900001


def load(name):
    return np.loadtxt(os.path.join(HERE, "p676", name), delimiter=",", skiprows=1)


OX = load("v12_lines_oxygen.txt")
WV = load("v12_lines_water_vapour.txt")


def gamma_oxygen(f, p, e, T):
    theta = 300.0 / T
    f0, a1, a2, a3, a4, a5, a6 = (OX[:, i][:, None] for i in range(7))
    df = a3 * 1e-4 * (p * theta ** (0.8 - a4) + 1.1 * e * theta)
    df = np.sqrt(df**2 + 2.25e-6)
    delta = (a5 + a6 * theta) * 1e-4 * (p + e) * theta**0.8
    F = f / f0 * ((df - delta * (f0 - f)) / ((f0 - f) ** 2 + df**2)
                  + (df - delta * (f0 + f)) / ((f0 + f) ** 2 + df**2))
    S = a1 * 1e-7 * p * theta**3 * np.exp(a2 * (1 - theta))
    d = 5.6e-4 * (p + e) * theta**0.8
    nd = f * p * theta**2 * (6.14e-5 / (d * (1 + (f / d) ** 2))
                             + 1.4e-12 * p * theta**1.5 / (1 + 1.9e-5 * f**1.5))
    return 0.1820 * f * ((S * F).sum(axis=0) + nd)


def gamma_water(f, p, e, T):
    theta = 300.0 / T
    f0, b1, b2, b3, b4, b5, b6 = (WV[:, i][:, None] for i in range(7))
    df = b3 * 1e-4 * (p * theta**b4 + b5 * e * theta**b6)
    df = 0.535 * df + np.sqrt(0.217 * df**2 + 2.1316e-12 * f0**2 / theta)
    F = f / f0 * (df / ((f0 - f) ** 2 + df**2) + df / ((f0 + f) ** 2 + df**2))
    S = b1 * 1e-1 * e * theta**3.5 * np.exp(b2 * (1 - theta))
    return 0.1820 * f * (S * F).sum(axis=0)


def write(path, freqs_hz, k):
    with open(path, "w", newline="\n") as fh:
        fh.write("frequency_hz,k_per_m\n")
        for f, v in zip(freqs_hz, k):
            fh.write(f"{f:.6e},{v:.9e}\n")


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "..", "data", "spectra")
    os.makedirs(out, exist_ok=True)
    n = int(round((F_MAX_GHZ - F_MIN_GHZ) / STEP_GHZ)) + 1
    f_ghz = np.linspace(F_MIN_GHZ, F_MAX_GHZ, n)
    f_hz = f_ghz * 1e9

    e_h2o = H2O_REF * P_HPA
    dry = P_HPA - e_h2o
    k_h2o = gamma_water(f_ghz, dry, e_h2o, T_K) * DB_PER_KM_TO_PER_M / H2O_REF
    k_o2 = gamma_oxygen(f_ghz, P_HPA, 0.0, T_K) * DB_PER_KM_TO_PER_M / O2_REF

    write(os.path.join(out, "H2O.csv"), f_hz, k_h2o)
    write(os.path.join(out, "O2.csv"), f_hz, k_o2)
    for species in ("N2", "CO2", "O3", "N2O", "CO", "CH4"):
        write(os.path.join(out, f"{species}.csv"), f_hz, np.zeros_like(f_hz))


if __name__ == "__main__":
    main()
