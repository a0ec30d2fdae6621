// Harmonic inversion of L x L cross-correlation signals by filter
// diagonalization: fits C_ab(n tau) = -i sum_k b_ak b_bk exp(-i w_k n tau)
// within a frequency window.
#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coh/recurrence.hpp"
#include "coh/spectral_line.hpp"

namespace coh {

class NyquistViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct InversionConfig {
    double w_min = 0.0;
    double w_max = 0.0;
    int J = 0;  // basis frequencies per channel; 0 picks the Fourier-grid count
    int M = 0;  // half length, uses samples 0..2M+1; 0 uses the whole signal
    double svd_cutoff = 1e-10;
    double accept_im = 1e-3;
    double accept_err = 1e-6;
    // Basis frequencies extend this fraction of the window width beyond each
    // edge; only lines inside [w_min, w_max] are reported.
    double margin = 0.1;
};

struct InversionDiagnostics {
    int K = 0;          // basis size J * L
    int rank = 0;       // retained singular directions of U0
    double condition = 0.0;  // sigma_max / smallest retained sigma
    std::size_t raw_lines = 0;
    std::size_t rejected_im = 0;
    std::size_t outside = 0;
};

// Lines sorted by Re w, gauge fixed, smoothing deconvolved.
SpectralLineSet invert(const SampledSignal& signal, const InversionConfig& cfg,
                       InversionDiagnostics* diag = nullptr);

// Lines of `a` that have a partner in `b` within tol_w; err_w and err_b are
// set to the discrepancies (b compared up to a global sign). Lines whose
// discrepancies exceed tol_w or tol_b are dropped.
SpectralLineSet cross_validate(const SpectralLineSet& a, const SpectralLineSet& b, double tol_w, double tol_b);

// Inverts the range [w_lo, w_hi] in windows of width <= max_width with
// `overlap` (fraction) between neighbours. Each line is taken from the
// window in which it lies farthest from an edge. cfg.w_min/w_max are ignored.
SpectralLineSet invert_range(const SampledSignal& signal, double w_lo, double w_hi, const InversionConfig& cfg,
                             double max_width = 6.0, double overlap = 0.1);

// Two inversions at M and at 3M/4 cross-validated against each other with
// cfg.accept_err on w.
SpectralLineSet invert_validated(const SampledSignal& signal, const InversionConfig& cfg);

// s_max ~ 4 pi rho, rho = (line count) / (window width). Needs two lines.
std::optional<double> recommend_signal_length(const SpectralLineSet& lines, double w_min, double w_max);

struct LineSetMeta {
    double w_min = 0.0, w_max = 0.0;
    int J = 0, M = 0;
    double tau = 0.0, sigma = 0.0;
    int L = 0;
    std::string signal_hash;
    std::string tool_version;
};

// Header lines "key value", a "lines" line, then per line:
//     Re w  Im w  (Re b_a  Im b_a) for each channel  err_w  err_b
void write_line_set(std::ostream& os, const SpectralLineSet& lines, const LineSetMeta& meta);
SpectralLineSet read_line_set(std::istream& is, LineSetMeta* meta = nullptr);

}  // namespace coh
