#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <limits>
#include <numbers>
#include <random>

#include "coh/scaled_dynamics.hpp"

using namespace coh;

namespace {

const ScaledEnergy kE(-0.7);
constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

// 2 * int_0^{r_t} sqrt(2 (2 - V(r))) dr along the mu = nu diagonal with
// V(r) = 0.7 r^2 + r^6 / 32; evaluated with mpmath at 30 digits.
constexpr double kPerpendicularAction = 4.938190910957969;

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("scaled energy must be negative") {
    CHECK_THROWS_AS(ScaledEnergy(0.0), std::domain_error);
    CHECK_THROWS_AS(ScaledEnergy(0.3), std::domain_error);
    CHECK(ScaledEnergy(-0.7).value() == -0.7);
}

TEST_CASE("launch state lies on the pseudo-energy shell") {
    for (double th : {0.0, 0.3, kPi / 2, 2.9, kPi}) {
        const auto x = launch_from_nucleus(th, kE);
        CHECK(std::abs(hamiltonian(x, kE) - kPseudoEnergy) < 1e-15);
        CHECK(return_angle(x.p_mu, x.p_nu) == doctest::Approx(th).epsilon(1e-14));
    }
    CHECK_THROWS_AS(launch_from_nucleus(-0.1, kE), std::domain_error);
    CHECK_THROWS_AS(launch_from_nucleus(3.2, kE), std::domain_error);
}

TEST_CASE("axial launch stays on the axis; one libration has the closed-form action") {
    const auto rec = integrate(launch_from_nucleus(0.0, kE), kE, kInf, {true, 3}, {});
    REQUIRE(rec.passes.size() == 3);
    for (const auto& p : rec.passes) {
        CHECK(std::abs(p.state.nu) <= 1e-12);
        CHECK(std::abs(p.state.p_nu) <= 1e-12);
    }
    const double s1 = 2.0 * kPi / std::sqrt(1.4);
    CHECK(std::abs(rec.passes[0].state.s - s1) <= 1e-9 * s1);
    CHECK(std::abs(rec.passes[2].state.s - 3.0 * s1) <= 3e-9 * s1);
}

TEST_CASE("perpendicular launch stays on the diagonal") {
    const auto rec = integrate(launch_from_nucleus(kPi / 2, kE), kE, 60.0, {}, {});
    for (const auto& p : rec.passes) CHECK(std::abs(p.state.mu - p.state.nu) <= 1e-10);
    CHECK(std::abs(rec.final_state.mu - rec.final_state.nu) <= 1e-10);
    REQUIRE(!rec.passes.empty());
    CHECK(std::abs(rec.passes[0].state.s - kPerpendicularAction) <= 1e-8);
    CHECK(rec.passes[0].distance < 1e-12);
}

TEST_CASE("energy drift and symplecticity over random launches") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.0, kPi);
    double drift = 0.0, symp = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto rec = integrate(launch_from_nucleus(U(rng), kE), kE, 100.0, {}, {});
        drift = std::max(drift, rec.max_energy_drift);
        symp = std::max(symp, rec.max_symplectic_defect);
        for (const auto& p : rec.passes) symp = std::max(symp, std::abs(p.monodromy.determinant() - 1.0));
    }
    CHECK(drift <= 1e-9);
    CHECK(symp <= 1e-8);
}

TEST_CASE("transverse monodromy is the identity at launch") {
    const auto x = launch_from_nucleus(1.1, kE);
    const auto m = transverse_monodromy(x, initial_deviations(x), kE);
    CHECK((m - Eigen::Matrix2d::Identity()).norm() < 1e-15);
}

TEST_CASE("time reversal returns to the launch state") {
    for (double th : {0.4, 1.3, 2.2}) {
        const auto x0 = launch_from_nucleus(th, kE);
        IntegrationOptions io;
        io.monodromy = false;
        const auto fwd = integrate(x0, kE, 50.0, {false, 0}, io);
        auto back = fwd.final_state;
        back.p_mu = -back.p_mu;
        back.p_nu = -back.p_nu;
        const auto rev = integrate(back, kE, 100.0, {false, 0}, io);
        const auto& x = rev.final_state;
        CHECK(std::abs(x.mu) <= 1e-8);
        CHECK(std::abs(x.nu) <= 1e-8);
        CHECK(std::abs(x.p_mu + x0.p_mu) <= 1e-8);
        CHECK(std::abs(x.p_nu + x0.p_nu) <= 1e-8);
    }
}

TEST_CASE("reflection partner is the mu <-> nu mirror image") {
    for (double th : {0.3, 0.9, 1.4}) {
        const auto a = integrate(launch_from_nucleus(th, kE), kE, 80.0, {}, {});
        const auto b = integrate(launch_from_nucleus(kPi - th, kE), kE, 80.0, {}, {});
        REQUIRE(a.passes.size() == b.passes.size());
        for (std::size_t k = 0; k < a.passes.size(); ++k) {
            CHECK(std::abs(a.passes[k].state.s - b.passes[k].state.s) <= 1e-10);
            CHECK(std::abs(a.passes[k].state.mu - b.passes[k].state.nu) <= 1e-8);
            CHECK(std::abs(a.passes[k].state.nu - b.passes[k].state.mu) <= 1e-8);
            CHECK(a.passes[k].caustics == b.passes[k].caustics);
            CHECK(a.passes[k].axis_crossings == b.passes[k].axis_crossings);
        }
    }
}

TEST_CASE("m12 zero count does not depend on the step size") {
    // Reference run with the step capped far below the natural step, so
    // neighbouring zeros of m12 always fall into different steps.
    IntegrationOptions fine;
    fine.step.max_step = 2e-3;
    for (double th : {0.05, 0.52, 1.0, 1.9, 2.61}) {
        const auto a = integrate(launch_from_nucleus(th, kE), kE, 150.0, {}, {});
        const auto b = integrate(launch_from_nucleus(th, kE), kE, 150.0, {}, fine);
        CHECK(a.caustic_times.size() == b.caustic_times.size());
        CHECK(a.axis_crossing_times.size() == b.axis_crossing_times.size());
    }
}

TEST_CASE("pass through the nucleus is two axis crossings") {
    const auto rec = integrate(launch_from_nucleus(kPi / 2, kE), kE, kInf, {true, 3}, {});
    REQUIRE(rec.passes.size() == 3);
    CHECK(rec.passes[0].axis_crossings == 0);
    CHECK(rec.passes[1].axis_crossings == 2);
    CHECK(rec.passes[2].axis_crossings == 4);
}

TEST_CASE("pass limit stops the run at the requested pass") {
    const auto rec = integrate(launch_from_nucleus(0.8, kE), kE, kInf, {true, 4}, {});
    CHECK(rec.reason == StopReason::PassLimit);
    REQUIRE(rec.passes.size() == 4);
    CHECK(rec.final_state.s == rec.passes[3].state.s);
}

TEST_CASE("tolerance violation is reported, not ignored") {
    IntegrationOptions io;
    io.energy_tolerance = 1e-30;
    CHECK_THROWS_AS(integrate(launch_from_nucleus(0.7, kE), kE, 20.0, {}, io), IntegrationFailure);
}

TEST_CASE("integration is deterministic") {
    const auto a = integrate(launch_from_nucleus(1.234, kE), kE, 120.0, {}, {});
    const auto b = integrate(launch_from_nucleus(1.234, kE), kE, 120.0, {}, {});
    CHECK(a.final_state.mu == b.final_state.mu);
    CHECK(a.final_state.p_nu == b.final_state.p_nu);
    CHECK(a.steps == b.steps);
}

}  // TEST_SUITE
