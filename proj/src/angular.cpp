#include "coh/angular.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace coh {

double legendre(int l, double x) {
    if (l < 0) throw std::invalid_argument("negative Legendre degree");
    if (l == 0) return 1.0;
    double p0 = 1.0, p1 = x;
    for (int n = 1; n < l; ++n) {
        const double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

double evaluate(const AngularFunction& f, double theta) {
    if (!(theta >= 0.0 && theta <= std::numbers::pi)) throw std::domain_error("angle outside [0, pi]");
    const double x = std::cos(theta);
    // Upward recurrence, accumulating as we go.
    double sum = 0.0, p0 = 1.0, p1 = x;
    for (std::size_t l = 0; l < f.coeffs.size(); ++l) {
        if (l == 0) {
            sum += f.coeffs[0] * p0;
        } else if (l == 1) {
            sum += f.coeffs[1] * p1;
        } else {
            const double n = static_cast<double>(l - 1);
            const double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
            p0 = p1;
            p1 = p2;
            sum += f.coeffs[l] * p2;
        }
    }
    return sum;
}

AngularFunction from_coefficients(std::vector<double> coeffs, std::string label) {
    if (coeffs.empty()) throw std::invalid_argument("angular function needs at least one coefficient");
    return {std::move(coeffs), std::move(label)};
}

AngularFunction build_2p0_parallel() {
    const double k = 128.0 * std::exp(-4.0) / std::sqrt(2.0 * std::numbers::pi);
    // 4x^2 - 1 = (8/3) P_2(x) + (1/3) P_0(x)
    return {{k / 3.0, 0.0, 8.0 * k / 3.0}, "2p0-parallel"};
}

double default_swave_constant() { return 1.0 / std::sqrt(2.0 * std::numbers::pi); }

AngularFunction build_swave(double c) {
    if (c == 0.0) throw std::invalid_argument("s-wave constant must be nonzero");
    return {{c}, "s-wave"};
}

}  // namespace coh
