// Physical observables from extracted lines: matrix elements, oscillator
// strengths, stick spectra and laboratory units.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "coh/spectral_line.hpp"

namespace coh {

inline constexpr double kAtomicFieldTesla = 2.35e5;
inline constexpr double kInitialEnergy2p0 = -0.125;

struct MatrixElement {
    cplx element;            // b_a (Re w)^(-1/4)
    double strength = 0.0;   // Re(b_a^2) / sqrt(Re w)
    double strength_im = 0.0;
};

// Throws std::domain_error for Re w <= 0.
MatrixElement matrix_element(const SpectralLine& line, std::size_t channel);

double gamma_of_w(double w);      // w^-3
double w_of_gamma(double gamma);  // gamma^(-1/3)
double field_of_w(double w);      // Tesla
double energy_of_w(double scaled_energy, double w);  // E = scaled_energy * gamma^(2/3)

// f_k = 2 (E_k - E_i) <phi|D|psi_k>^2 with E_k at the field fixed by w_k.
double oscillator_strength(const SpectralLine& line, std::size_t channel, double scaled_energy,
                           double initial_energy = kInitialEnergy2p0);

struct Stick {
    double w = 0.0;
    double strength = 0.0;
    double error = 0.0;
};

using StickSpectrum = std::vector<Stick>;

// Sorted by w; sticks closer than merge_tol are combined (strengths and
// errors summed, position strength-weighted).
StickSpectrum assemble_stick_spectrum(const SpectralLineSet& lines, std::size_t channel, double merge_tol = 1e-6);
StickSpectrum merge_sticks(StickSpectrum sticks, double merge_tol = 1e-6);

void write_sticks(std::ostream& os, const StickSpectrum& sticks, const std::vector<std::string>& header = {});

// Minimal SVG plots with linear axes.
void write_stick_svg(std::ostream& os, const StickSpectrum& sticks, const std::string& title,
                     const std::string& y_label);
void write_curve_svg(std::ostream& os, const std::vector<double>& x, const std::vector<double>& y,
                     const std::string& title, const std::string& x_label, const std::string& y_label);

}  // namespace coh
