// Angular functions Y(theta) = sum_l B_l P_l(cos theta) describing initial
// state and dipole operator in the closed-orbit amplitudes.
#pragma once

#include <string>
#include <vector>

namespace coh {

struct AngularFunction {
    std::vector<double> coeffs;  // Legendre coefficients B_l, l = 0, 1, ...
    std::string label;
};

// Sum of the Legendre series at theta in [0, pi]; throws std::domain_error
// outside.
double evaluate(const AngularFunction& f, double theta);

// Legendre polynomial P_l(x) by the three-term recurrence.
double legendre(int l, double x);

AngularFunction from_coefficients(std::vector<double> coeffs, std::string label);

// 2p0 initial state, light polarized parallel to the field:
// (2 pi)^(-1/2) 2^7 e^(-4) (4 cos^2 theta - 1).
AngularFunction build_2p0_parallel();

// Outgoing s-wave, Y = c. c must be nonzero.
double default_swave_constant();
AngularFunction build_swave(double c = default_swave_constant());

}  // namespace coh
