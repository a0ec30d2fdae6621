#pragma once

#include <complex>
#include <vector>

namespace coh {

using cplx = std::complex<double>;

// One extracted eigenvalue of the scaling parameter with its channel
// amplitudes b_a; the products b_a * b_b are the gauge-free content.
struct SpectralLine {
    cplx w;
    std::vector<cplx> b;
    double err_w = 0.0;  // cross-validation discrepancy in w
    double err_b = 0.0;  // max channel discrepancy in b

    cplx product(std::size_t a, std::size_t c) const { return b[a] * b[c]; }
};

using SpectralLineSet = std::vector<SpectralLine>;

// Flips the sign of b so that the channel of largest |b| has Re b >= 0.
void fix_gauge(SpectralLine& line);

}  // namespace coh
