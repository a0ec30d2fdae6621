// Configuration and stages of the orbits -> signal -> lines -> spectrum
// pipeline, with the provenance chain between the files.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coh/angular.hpp"
#include "coh/harmonic_inversion.hpp"
#include "coh/orbit_search.hpp"
#include "coh/recurrence.hpp"
#include "coh/spectrum.hpp"

namespace coh {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SyntheticSpec {
    bool enabled = false;
    SpectralLineSet lines;  // explicit lines
    // Random lines: count uniform in w_range with |b| uniform in b_range and
    // random signs; generated from rng_seed.
    int random_count = 0;
    double w_lo = 0.0, w_hi = 0.0;
    double b_lo = 0.1, b_hi = 2.0;
    int channels = 2;
    double min_separation = 0.0;
};

struct PipelineConfig {
    double scaled_energy = -0.7;
    double s_max = 0.0;  // required
    int n_seeds = 20000;
    std::optional<double> tau;    // empty means "auto"
    std::optional<double> sigma;  // empty means "auto"
    std::vector<std::pair<double, double>> windows;
    std::vector<AngularFunction> channels;
    double swave_constant = 0.0;
    SearchOptions search;
    InversionConfig inversion;
    double max_window_width = 6.0;
    double window_overlap = 0.1;
    std::size_t physical_channel = 0;
    double initial_energy = kInitialEnergy2p0;
    std::string output_dir = "out";
    std::uint64_t rng_seed = 1;
    int threads = 0;  // 0: all hardware threads
    SyntheticSpec synthetic;
};

// JSON text with the documented keys (see README). Unknown keys are errors.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);

// "auto" rules: tau = min(0.05, pi / (1.2 w_max)) over all windows,
// sigma = 2 tau.
double resolve_tau(const PipelineConfig& cfg);
double resolve_sigma(const PipelineConfig& cfg);

// File names inside output_dir.
struct OutputPaths {
    std::filesystem::path orbits, signal, sticks, sticks_svg, signal_plot, signal_table;
    std::filesystem::path lines(double w_min, double w_max) const;
    std::filesystem::path dir;
};
OutputPaths output_paths(const PipelineConfig& cfg);

std::string read_file(const std::filesystem::path& p);
void write_file_atomic(const std::filesystem::path& p, const std::string& content);

// Stages. Each returns the file content it wrote so callers can hash it.
struct OrbitStage {
    SearchReport report;
    std::string table;
};
OrbitStage run_orbit_stage(const PipelineConfig& cfg);

struct SignalStage {
    SampledSignal signal;
    BuildReport build;
    std::string text;
};
SignalStage run_signal_stage(const PipelineConfig& cfg, const std::vector<ClosedOrbit>& orbits,
                             const std::string& orbit_table_hash);
SignalStage run_synthetic_signal_stage(const PipelineConfig& cfg);

struct WindowLines {
    double w_min = 0.0, w_max = 0.0;
    SpectralLineSet lines;
    std::string text;
};
std::vector<WindowLines> run_inversion_stage(const PipelineConfig& cfg, const SampledSignal& signal,
                                             const std::string& signal_hash);

struct SpectrumStage {
    StickSpectrum sticks;
    std::string text, svg;
};
SpectrumStage run_spectrum_stage(const PipelineConfig& cfg, const std::vector<SpectralLineSet>& line_sets,
                                 const std::vector<std::string>& line_set_hashes);

SpectralLineSet synthetic_lines(const PipelineConfig& cfg);

// Checks that every file in the output directory names the hash of its
// input and this tool version. Returns the list of problems (empty if ok).
std::vector<std::string> verify_chain(const std::filesystem::path& dir);

}  // namespace coh
