// Cross-correlated recurrence signals built from closed-orbit data, the
// smoothed closed-orbit sum, and exact synthetic signals of the quantum form
//     C_ab(s) = -i sum_k b_ak b_bk exp(-i w_k s).
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coh/angular.hpp"
#include "coh/orbit_search.hpp"
#include "coh/spectral_line.hpp"

namespace coh {

class FocalSingularity : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kFocalThreshold = 1e-12;

// Closed-orbit amplitude for channels (fa, fb):
//   -(2 pi)^(5/2) |m12|^(-1/2) sqrt(sin ti sin tf) fa(ti) fb(tf) exp(i(pi/4 - pi/2 maslov)).
cplx spike_amplitude(const ClosedOrbit& orbit, const AngularFunction& fa, const AngularFunction& fb);

struct SignalMeta {
    double scaled_energy = 0.0;
    std::string orbit_table_hash;
    std::string source;  // "closed-orbits" or "synthetic"
    std::vector<AngularFunction> channels;
    double swave_constant = 0.0;
    std::string tool_version;
    double max_asymmetry = 0.0;  // relative asymmetry before symmetrization
};

// L x L matrix of recurrence functions sampled at s_n = n tau, n = 0..n-1.
struct SampledSignal {
    double tau = 0.0;
    double sigma = 0.0;  // Gaussian smoothing width, 0 for unsmoothed signals
    int L = 0;
    std::vector<cplx> data;  // sample-major, then row-major (a, b)
    SignalMeta meta;

    std::size_t size() const { return L == 0 ? 0 : data.size() / static_cast<std::size_t>(L * L); }
    cplx& at(std::size_t n, int a, int b) { return data[(n * L + a) * L + b]; }
    const cplx& at(std::size_t n, int a, int b) const { return data[(n * L + a) * L + b]; }
    double s_max() const { return tau * static_cast<double>(size() - 1); }

    // Sub-signal restricted to the listed channels.
    SampledSignal select(std::span<const int> channels) const;
};

struct BuildReport {
    std::size_t used = 0;
    std::size_t skipped_zero = 0;   // axial orbits and nodes of the angular functions
    std::size_t skipped_focal = 0;  // |m12| below the focal threshold
    std::vector<std::string> log;
};

// Gaussian-smoothed delta comb sum_co A_co g_sigma(s - s_co) on the grid
// s_n = n tau, n = 0..floor(s_max / tau). Requires sigma >= tau and every
// orbit action <= s_max. The result is symmetrized; asymmetry before
// symmetrization above asymmetry_tolerance (relative) throws.
SampledSignal build_signal(const std::vector<ClosedOrbit>& orbits, const std::vector<AngularFunction>& channels,
                           double sigma, double tau, double s_max, BuildReport* report = nullptr,
                           double asymmetry_tolerance = 1e-8);

// Exact samples of -i sum_k b_ak b_bk exp(-i w_k s) at s = 0, tau, ...
SampledSignal synth_quantum_signal(const SpectralLineSet& lines, double tau, std::size_t n);

// Same, convolved with a unit-area Gaussian of width sigma (each term gains
// exp(-sigma^2 w^2 / 2)).
SampledSignal synth_smoothed_signal(const SpectralLineSet& lines, double tau, std::size_t n, double sigma);

// Truncated, damped closed-orbit sum
//   g_ab(w) = w^(-1/2) sum_{s_co <= s_cutoff} A_co exp(i s_co w) exp(-damping s_co^2).
std::vector<Eigen::MatrixXcd> evaluate_gsc_smoothed(const std::vector<ClosedOrbit>& orbits,
                                                    const std::vector<AngularFunction>& channels,
                                                    std::span<const double> w_grid, double s_cutoff,
                                                    double damping);

struct MagnitudeSpectrum {
    std::vector<double> axis;
    std::vector<double> magnitude;
};

// Hann-windowed discrete Fourier magnitude
//   |dx sum_n win_n x_n exp(i sign y (x0 + n dx))|
// evaluated on the conjugate grid y.
MagnitudeSpectrum fourier_recurrence(std::span<const cplx> samples, double x0, double dx,
                                     std::span<const double> conjugate_grid, int sign, bool window = true);

// Default sampling: tau = min(0.05, pi / (1.2 w_max)), sigma = 2 tau.
double default_tau(double w_max);
inline double default_sigma(double tau) { return 2.0 * tau; }

// Signal file: text header of "key value" lines, a "data" line, then one
// record per sample with 2 L^2 decimal numbers (Re, Im; row-major (a, b)).
void write_signal(std::ostream& os, const SampledSignal& signal);
SampledSignal read_signal(std::istream& is);

}  // namespace coh
