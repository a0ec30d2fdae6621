"""Emit include/coh/dop853_tableau.hpp from the DOP853 coefficient table
shipped with SciPy (Hairer's coefficients, 16-stage extended tableau)."""
import sys
from scipy.integrate._ivp import dop853_coefficients as c


def fmt(x):
    return repr(float(x))


def main(out):
    n = c.N_STAGES_EXTENDED
    lines = []
    w = lines.append
    w("// Generated by tools/gen_dop853_tableau.py. Do not edit.")
    w("#pragma once")
    w("")
    w("#include <array>")
    w("")
    w("namespace coh::dop853 {")
    w("")
    w(f"inline constexpr int kStages = {c.N_STAGES};")
    w(f"inline constexpr int kStagesExtended = {n};")
    w(f"inline constexpr int kInterpolatorPower = {c.INTERPOLATOR_POWER};")
    w("")
    w(f"inline constexpr std::array<double, {n}> C = {{")
    w("    " + ", ".join(fmt(x) for x in c.C) + "};")
    w("")
    w(f"inline constexpr std::array<std::array<double, {n}>, {n}> A = {{{{")
    for row in c.A:
        w("    {" + ", ".join(fmt(x) for x in row) + "},")
    w("}};")
    w("")
    k = c.N_STAGES + 1
    w(f"inline constexpr std::array<double, {k}> E3 = {{")
    w("    " + ", ".join(fmt(x) for x in c.E3) + "};")
    w(f"inline constexpr std::array<double, {k}> E5 = {{")
    w("    " + ", ".join(fmt(x) for x in c.E5) + "};")
    w("")
    d = c.D.shape[0]
    w(f"inline constexpr std::array<std::array<double, {n}>, {d}> D = {{{{")
    for row in c.D:
        w("    {" + ", ".join(fmt(x) for x in row) + "},")
    w("}};")
    w("")
    w("}  // namespace coh::dop853")
    with open(out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "include/coh/dop853_tableau.hpp")
