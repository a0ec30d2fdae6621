// Search for orbits that start at and return to the nucleus, refinement of
// their launch angles, and the closed-orbit quantities entering the
// semiclassical amplitudes (angles, scaled action, m12, Maslov index).
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coh/scaled_dynamics.hpp"

namespace coh {

struct ClosedOrbit {
    int id = 0;
    int primitive_id = 0;
    int repetition = 1;
    double theta_i = 0.0;
    double theta_f = 0.0;
    double s = 0.0;
    double m12 = 0.0;
    int maslov = 0;
    double closure_residual = 0.0;
};

struct PassSample {
    int index = 0;
    double s = 0.0;
    double miss = 0.0;
    double distance = 0.0;
};

struct SeedScan {
    double theta = 0.0;
    std::vector<PassSample> passes;
    bool ok = true;
};

// Adjacent seeds whose matched closest-approach pass changes the sign of the
// miss function.
struct Bracket {
    double theta_lo = 0.0, theta_hi = 0.0;
    double miss_lo = 0.0, miss_hi = 0.0;
    int pass_lo = 0, pass_hi = 0;  // pass indices on the two seeds
    double s_lo = 0.0, s_hi = 0.0;
};

// Maslov index convention. AxisCrossings: zeros of m12 plus crossings of the
// field axis plus 2. M12Zeros: zeros of m12 only.
enum class MaslovRule { AxisCrossings, M12Zeros };

struct SearchOptions {
    IntegrationOptions integration;
    int threads = 1;
    int max_iterations = 80;
    double miss_tolerance = 1e-12;
    double closure_tolerance = 1e-10;
    // Passes closer than this to the nucleus are treated as returns when
    // deciding whether a refined orbit is primitive.
    double return_distance = 1e-6;
    // Adaptive scan: neighbouring seeds whose passes do not continue into
    // each other, or whose miss values differ by more than miss_jump, are
    // bisected down to (seed spacing) / 2^scan_refine_depth.
    int scan_refine_depth = 10;
    double miss_jump = 0.5;
    MaslovRule maslov = MaslovRule::AxisCrossings;
};

struct ScanResult {
    std::vector<SeedScan> seeds;
    std::vector<Bracket> brackets;
};

// Launch angles theta_k = pi (k + 1/2) / n_seeds, k = 0..n_seeds-1.
std::vector<double> seed_angles(int n_seeds);

ScanResult scan_launch_angles(ScaledEnergy e, double s_max, int n_seeds, const SearchOptions& opt = {});

// Brackets between two adjacent seed scans (exposed for testing the pass
// matching on synthetic data).
std::vector<Bracket> match_brackets(const SeedScan& a, const SeedScan& b);

struct RefineResult {
    bool ok = false;
    ClosedOrbit orbit;
    int returns_before = 0;  // earlier passes through the nucleus
    int pass_index = 0;
    std::string diagnostic;
};

RefineResult refine_closed_orbit(const Bracket& bracket, ScaledEnergy e, const SearchOptions& opt = {});

// Integrates the orbit launched at theta_i through its k-th return to the
// nucleus and evaluates the closed-orbit quantities there. theta_i is
// re-polished so that the k-th return closes to closure_tolerance.
RefineResult close_at_return(double theta_i, int k, double s_hint, ScaledEnergy e, const SearchOptions& opt = {});

// Maslov index of the return at the given pass, counting events strictly
// between launch and the pass.
int maslov_index(const TrajectoryRecord& trajectory, int pass_index, MaslovRule rule = MaslovRule::AxisCrossings);

struct ExtendResult {
    std::vector<ClosedOrbit> orbits;  // sorted by (s, theta_i), ids assigned
    std::vector<std::string> diagnostics;
};

ExtendResult extend_repetitions(const std::vector<ClosedOrbit>& primitives, double s_max, ScaledEnergy e,
                                const SearchOptions& opt = {});

struct SearchReport {
    std::vector<ClosedOrbit> primitives;
    std::vector<ClosedOrbit> orbits;  // primitives and repetitions
    std::vector<std::string> rejected;
    std::size_t bracket_count = 0;
    std::size_t symmetry_completed = 0;  // partners added from the symmetry images
};

// Full pipeline: scan, refine, dedupe, add the axis and symmetry-line orbits,
// then extend by repetitions.
SearchReport find_closed_orbits(ScaledEnergy e, double s_max, int n_seeds, const SearchOptions& opt = {});

// Orbit table: header comment lines (starting with '#') followed by one
// record per orbit with the fields
//     id primitive_id repetition theta_i theta_f s m12 maslov closure_residual
// written with 17 significant digits.
void write_orbit_table(std::ostream& os, const std::vector<ClosedOrbit>& orbits,
                       const std::vector<std::string>& header = {});
std::vector<ClosedOrbit> read_orbit_table(std::istream& is);

}  // namespace coh
