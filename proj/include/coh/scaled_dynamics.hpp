// Scaled, regularized classical dynamics of the hydrogen atom in a magnetic
// field (m = 0) in semiparabolic coordinates mu = sqrt(r + z), nu = sqrt(r - z).
//
// The pseudo-Hamiltonian
//     h = (p_mu^2 + p_nu^2) / 2 - E (mu^2 + nu^2) + mu^2 nu^2 (mu^2 + nu^2) / 8
// is conserved with the value h = 2; E is the scaled energy E * gamma^(-2/3).
// Trajectories pass smoothly through the nucleus mu = nu = 0.
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "coh/dop853.hpp"

namespace coh {

class ScaledEnergy {
public:
    explicit ScaledEnergy(double value) : value_(value) {
        if (!(value < 0.0)) throw std::domain_error("scaled energy must be negative (bound regime)");
    }
    double value() const { return value_; }

private:
    double value_;
};

inline constexpr double kPseudoEnergy = 2.0;

struct PhaseState {
    double mu = 0.0, nu = 0.0;
    double p_mu = 0.0, p_nu = 0.0;
    double s = 0.0;  // accumulated scaled action
    double t = 0.0;  // regularized time
};

struct PhaseRate {
    double dmu = 0.0, dnu = 0.0, dp_mu = 0.0, dp_nu = 0.0, ds = 0.0;
};

double hamiltonian(const PhaseState& x, ScaledEnergy e);
PhaseRate eom_rhs(const PhaseState& x, ScaledEnergy e);

// Launch from the nucleus at physical angle theta_i to the field axis. The
// semiparabolic momentum direction is theta_i / 2.
PhaseState launch_from_nucleus(double theta_i, ScaledEnergy e);

// Signed miss function mu*p_nu - nu*p_mu; at a closest approach it is
// |p| times the signed distance from the nucleus.
inline double miss_function(const PhaseState& x) { return x.mu * x.p_nu - x.nu * x.p_mu; }
inline double radius2(const PhaseState& x) { return x.mu * x.mu + x.nu * x.nu; }

// Physical angle (0..pi) of the direction a trajectory comes from when it
// reaches the nucleus with the given momenta; sign gauge folded away.
double return_angle(double p_mu, double p_nu);

// Deviation vectors propagated alongside the trajectory. Column 0 starts as
// a unit transverse position offset, column 1 as a unit transverse momentum
// kick; rows are (dq_mu, dq_nu, dp_mu, dp_nu).
using Deviations = Eigen::Matrix<double, 4, 2>;

// 2x2 transverse monodromy matrix in the chart (q_perp, p_perp) where
// q_perp, p_perp are the components along n = (-p_nu, p_mu)/|p| after the
// flow direction has been projected out. Identity at launch; det == 1.
Eigen::Matrix2d transverse_monodromy(const PhaseState& x, const Deviations& d, ScaledEnergy e);

struct ClosestApproach {
    int index = 0;            // 1-based pass counter along the trajectory
    PhaseState state;
    Eigen::Matrix2d monodromy = Eigen::Matrix2d::Identity();
    Deviations deviations = Deviations::Zero();
    double distance = 0.0;    // semiparabolic radius sqrt(mu^2 + nu^2)
    double miss = 0.0;        // miss_function at the pass
    int caustics = 0;         // zeros of m12 strictly between launch and this pass
    // Sign changes of mu and of nu before this pass (crossings of the field
    // axis; a passage through the nucleus counts twice). The crossings of a
    // pass through the nucleus itself are not included.
    int axis_crossings = 0;
};

enum class StopReason { ActionLimit, PassLimit };

struct EventSpec {
    bool closest_approach = true;
    int stop_after_pass = 0;  // 0: run to the action limit
};

struct IntegrationOptions {
    StepControl step;
    bool monodromy = true;
    double energy_tolerance = 1e-9;
    long max_steps = 50'000'000;
};

struct TrajectoryRecord {
    PhaseState final_state;
    Deviations final_deviations = Deviations::Zero();
    std::vector<ClosestApproach> passes;
    std::vector<double> caustic_times;  // regularized times of m12 zeros
    std::vector<double> ambiguous_caustics;  // zeros within 1e-12 of a pass
    std::vector<double> axis_crossing_times;
    StopReason reason = StopReason::ActionLimit;
    double max_energy_drift = 0.0;
    double max_symplectic_defect = 0.0;  // max |det m - 1| over accepted steps
    long steps = 0;
};

class IntegrationFailure : public std::runtime_error {
public:
    IntegrationFailure(const std::string& what, PhaseState last)
        : std::runtime_error(what), last_valid(last) {}
    PhaseState last_valid;
};

// Integrates from state0 until the action reaches s_limit or the event spec
// stops the run. Throws IntegrationFailure on step-size underflow or when
// the pseudo-energy drifts beyond options.energy_tolerance.
TrajectoryRecord integrate(const PhaseState& state0, ScaledEnergy e, double s_limit,
                           const EventSpec& events = {}, const IntegrationOptions& options = {});

// Same, starting from explicit deviation vectors (used to continue a run).
TrajectoryRecord integrate(const PhaseState& state0, const Deviations& dev0, ScaledEnergy e,
                           double s_limit, const EventSpec& events, const IntegrationOptions& options);

// Initial deviations for a launch with the given momenta: transverse unit
// position offset and transverse unit momentum kick.
Deviations initial_deviations(const PhaseState& x);

}  // namespace coh
