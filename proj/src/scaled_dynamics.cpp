#include "coh/scaled_dynamics.hpp"

#include <cmath>
#include <numbers>

namespace coh {

namespace {

struct Gradient {
    double mu, nu;
};

// Potential part of the pseudo-Hamiltonian and its derivatives.
inline Gradient potential_gradient(double mu, double nu, double e) {
    const double mu2 = mu * mu, nu2 = nu * nu;
    return {-2.0 * e * mu + 0.5 * mu * mu2 * nu2 + 0.25 * mu * nu2 * nu2,
            -2.0 * e * nu + 0.5 * nu * nu2 * mu2 + 0.25 * nu * mu2 * mu2};
}

struct Hessian {
    double mumu, munu, nunu;
};

inline Hessian potential_hessian(double mu, double nu, double e) {
    const double mu2 = mu * mu, nu2 = nu * nu;
    return {-2.0 * e + 1.5 * mu2 * nu2 + 0.25 * nu2 * nu2, mu * nu * (mu2 + nu2),
            -2.0 * e + 1.5 * mu2 * nu2 + 0.25 * mu2 * mu2};
}

constexpr std::size_t kPhaseDim = 5;
constexpr std::size_t kBaseDim = 5;
constexpr std::size_t kFullDim = 13;
constexpr double kNucleusPass = 1e-4;
constexpr double kNucleusWindow = 1e-6;

template <std::size_t N>
struct Rhs {
    double e;
    void operator()(const std::array<double, N>& y, std::array<double, N>& f) const {
        const auto g = potential_gradient(y[0], y[1], e);
        f[0] = y[2];
        f[1] = y[3];
        f[2] = -g.mu;
        f[3] = -g.nu;
        f[4] = y[2] * y[2] + y[3] * y[3];
        if constexpr (N == kFullDim) {
            const auto h = potential_hessian(y[0], y[1], e);
            for (std::size_t k = 5; k < kFullDim; k += 4) {
                f[k] = y[k + 2];
                f[k + 1] = y[k + 3];
                f[k + 2] = -(h.mumu * y[k] + h.munu * y[k + 1]);
                f[k + 3] = -(h.munu * y[k] + h.nunu * y[k + 1]);
            }
        }
    }
};

template <std::size_t N>
PhaseState to_phase(const std::array<double, N>& y, double t) {
    return {y[0], y[1], y[2], y[3], y[4], t};
}

template <std::size_t N>
Deviations to_deviations(const std::array<double, N>& y) {
    Deviations d = Deviations::Zero();
    if constexpr (N == kFullDim) {
        for (int c = 0; c < 2; ++c)
            for (int r = 0; r < 4; ++r) d(r, c) = y[5 + 4 * c + r];
    }
    return d;
}

// Transverse Jacobi field of the momentum kick, crossed with the velocity.
// Equals -|p| * m12; its zeros are the caustics (including brake points).
template <std::size_t N>
double jacobi_cross(const std::array<double, N>& y) {
    return y[9] * y[3] - y[10] * y[2];
}

// Time derivative of jacobi_cross along the flow.
template <std::size_t N>
double jacobi_cross_rate(const std::array<double, N>& y, double e) {
    const auto g = potential_gradient(y[0], y[1], e);
    return y[11] * y[3] - y[9] * g.nu - y[12] * y[2] + y[10] * g.mu;
}

template <std::size_t N>
double pass_function(const std::array<double, N>& y) {
    return y[0] * y[2] + y[1] * y[3];
}

// Root of fn on [a, b] with fn(a), fn(b) of opposite sign: Illinois-modified
// regula falsi, finishing with bisection when it stalls.
template <class Fn>
double locate_root(Fn&& fn, double a, double b, double fa, double fb) {
    int side = 0;
    for (int it = 0; it < 200; ++it) {
        const double width = b - a;
        if (width <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b))) break;
        double c = (fa * b - fb * a) / (fa - fb);
        if (!(c > a && c < b)) c = 0.5 * (a + b);
        const double fc = fn(c);
        if (fc == 0.0) return c;
        if ((fc < 0.0) == (fb < 0.0)) {
            b = c;
            fb = fc;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            a = c;
            fa = fc;
            if (side == 1) fb *= 0.5;
            side = 1;
        }
    }
    return std::abs(fa) < std::abs(fb) ? a : b;
}

template <std::size_t N>
TrajectoryRecord run(const std::array<double, N>& y0, double t0, ScaledEnergy energy, double s_limit,
                     const EventSpec& events, const IntegrationOptions& opt) {
    using State = std::array<double, N>;
    const double e = energy.value();
    Dop853<N, Rhs<N>, kBaseDim> stepper(Rhs<N>{e}, y0, t0, opt.step);

    TrajectoryRecord rec;
    auto energy_of = [&](const State& y) {
        return hamiltonian(to_phase(y, 0.0), energy);
    };
    const double h0 = energy_of(y0);
    rec.max_energy_drift = std::abs(h0 - kPseudoEnergy);

    double jacobi_sign = 0.0;
    if constexpr (N == kFullDim) {
        const double j = jacobi_cross(y0);
        jacobi_sign = j > 0 ? 1.0 : (j < 0 ? -1.0 : 0.0);
    }
    int pass_count = 0;
    std::array<double, 2> axis_sign{};
    for (int c = 0; c < 2; ++c) axis_sign[c] = y0[c] > 0 ? 1.0 : (y0[c] < 0 ? -1.0 : 0.0);

    auto finish = [&](const State& y, double t, StopReason reason) {
        rec.final_state = to_phase(y, t);
        rec.final_deviations = to_deviations(y);
        rec.reason = reason;
        rec.steps = stepper.steps();
        return rec;
    };

    if (y0[4] >= s_limit) return finish(y0, t0, StopReason::ActionLimit);

    for (;;) {
        if (stepper.steps() >= opt.max_steps)
            throw IntegrationFailure("step budget exhausted", to_phase(stepper.y(), stepper.t()));
        if (!stepper.step())
            throw IntegrationFailure("step size underflow", to_phase(stepper.y(), stepper.t()));

        const double ta = stepper.t_old();
        double tb = stepper.t();
        State yb = stepper.y();
        bool hit_limit = false;
        if (yb[4] >= s_limit) {
            auto fs = [&](double t) { return stepper.dense(t)[4] - s_limit; };
            tb = locate_root(fs, ta, tb, stepper.y_old()[4] - s_limit, yb[4] - s_limit);
            yb = stepper.dense(tb);
            yb[4] = s_limit;
            hit_limit = true;
        }

        const double drift = std::abs(energy_of(yb) - kPseudoEnergy);
        rec.max_energy_drift = std::max(rec.max_energy_drift, drift);
        if (drift > opt.energy_tolerance)
            throw IntegrationFailure("pseudo-energy drift " + std::to_string(drift) + " exceeds tolerance",
                                     to_phase(yb, tb));

        // Sub-sampled step; close pairs of m12 zeros are caught through the
        // extremum of jacobi_cross between samples.
        constexpr int kSub = 8;
        std::array<double, kSub + 1> ts;
        std::array<State, kSub + 1> ys;
        for (int k = 0; k <= kSub; ++k) {
            ts[k] = k == kSub ? tb : ta + (tb - ta) * k / kSub;
            ys[k] = k == 0 ? stepper.y_old() : (k == kSub ? yb : stepper.dense(ts[k]));
        }

        for (int c = 0; c < 2; ++c) {
            for (int k = 1; k <= kSub; ++k) {
                const double v = ys[k][c];
                const double sign = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
                if (sign == 0.0) continue;
                if (axis_sign[c] != 0.0 && sign != axis_sign[c]) {
                    auto fa = [&](double t) { return stepper.dense(t)[c]; };
                    rec.axis_crossing_times.push_back(locate_root(fa, ts[k - 1], ts[k], ys[k - 1][c], v));
                }
                axis_sign[c] = sign;
            }
        }

        if constexpr (N == kFullDim) {
            auto fj = [&](double t) { return jacobi_cross(stepper.dense(t)); };
            auto fr = [&](double t) { return jacobi_cross_rate(stepper.dense(t), e); };
            for (int k = 1; k <= kSub; ++k) {
                const double ja = jacobi_cross(ys[k - 1]);
                const double j = jacobi_cross(ys[k]);
                const double sign = j > 0 ? 1.0 : (j < 0 ? -1.0 : 0.0);
                if (sign == 0.0) continue;
                if (jacobi_sign != 0.0 && sign != jacobi_sign) {
                    rec.caustic_times.push_back(locate_root(fj, ts[k - 1], ts[k], ja, j));
                } else if (jacobi_sign != 0.0 && ja != 0.0) {
                    const double ra = jacobi_cross_rate(ys[k - 1], e);
                    const double rb = jacobi_cross_rate(ys[k], e);
                    if (ja * ra < 0.0 && j * rb > 0.0) {
                        const double te = locate_root(fr, ts[k - 1], ts[k], ra, rb);
                        const double je = fj(te);
                        if (je * j < 0.0) {
                            rec.caustic_times.push_back(locate_root(fj, ts[k - 1], te, ja, je));
                            rec.caustic_times.push_back(locate_root(fj, te, ts[k], je, j));
                        }
                    }
                }
                jacobi_sign = sign;
            }
            const auto m = transverse_monodromy(to_phase(yb, tb), to_deviations(yb), energy);
            if (yb[2] * yb[2] + yb[3] * yb[3] > 1e-12)
                rec.max_symplectic_defect = std::max(rec.max_symplectic_defect, std::abs(m.determinant() - 1.0));
        }

        if (events.closest_approach) {
            for (int k = 1; k <= kSub; ++k) {
                const double ga = pass_function(ys[k - 1]);
                const double gb = pass_function(ys[k]);
                if (!(ga < 0.0 && gb >= 0.0)) continue;
                auto fg = [&](double t) { return pass_function(stepper.dense(t)); };
                const double tp = gb == 0.0 ? ts[k] : locate_root(fg, ts[k - 1], ts[k], ga, gb);
                const State yp = stepper.dense(tp);
                ClosestApproach pass;
                pass.index = ++pass_count;
                pass.state = to_phase(yp, tp);
                pass.distance = std::sqrt(radius2(pass.state));
                pass.miss = miss_function(pass.state);
                if constexpr (N == kFullDim) {
                    pass.deviations = to_deviations(yp);
                    pass.monodromy = transverse_monodromy(pass.state, pass.deviations, energy);
                    int count = 0;
                    for (double tc : rec.caustic_times) {
                        if (std::abs(tc - tp) <= 1e-12) {
                            rec.ambiguous_caustics.push_back(tc);
                        } else if (tc < tp) {
                            ++count;
                        }
                    }
                    pass.caustics = count;
                }
                for (double tc : rec.axis_crossing_times) {
                    // Crossings that make up the pass through the nucleus itself.
                    if (pass.distance < kNucleusPass && std::abs(tc - tp) <= kNucleusWindow) continue;
                    if (tc < tp) ++pass.axis_crossings;
                }
                rec.passes.push_back(pass);
                if (events.stop_after_pass > 0 && pass_count >= events.stop_after_pass) {
                    // Drop caustics recorded beyond the stopping point.
                    std::erase_if(rec.caustic_times, [tp](double tc) { return tc > tp; });
                    std::erase_if(rec.axis_crossing_times, [tp](double tc) { return tc > tp; });
                    return finish(yp, tp, StopReason::PassLimit);
                }
            }
        }

        if (hit_limit) return finish(yb, tb, StopReason::ActionLimit);
    }
}

std::array<double, kFullDim> pack_full(const PhaseState& x, const Deviations& d) {
    std::array<double, kFullDim> y{x.mu, x.nu, x.p_mu, x.p_nu, x.s};
    for (int c = 0; c < 2; ++c)
        for (int r = 0; r < 4; ++r) y[5 + 4 * c + r] = d(r, c);
    return y;
}

}  // namespace

double hamiltonian(const PhaseState& x, ScaledEnergy e) {
    const double mu2 = x.mu * x.mu, nu2 = x.nu * x.nu;
    return 0.5 * (x.p_mu * x.p_mu + x.p_nu * x.p_nu) - e.value() * (mu2 + nu2) +
           0.125 * mu2 * nu2 * (mu2 + nu2);
}

PhaseRate eom_rhs(const PhaseState& x, ScaledEnergy e) {
    const auto g = potential_gradient(x.mu, x.nu, e.value());
    return {x.p_mu, x.p_nu, -g.mu, -g.nu, x.p_mu * x.p_mu + x.p_nu * x.p_nu};
}

PhaseState launch_from_nucleus(double theta_i, ScaledEnergy) {
    if (!(theta_i >= 0.0 && theta_i <= std::numbers::pi))
        throw std::domain_error("launch angle outside [0, pi]");
    const double p = std::sqrt(2.0 * kPseudoEnergy);
    // Upper half uses the mirror angle so theta = pi launches exactly along nu.
    if (theta_i > 0.5 * std::numbers::pi) {
        const double m = 0.5 * (std::numbers::pi - theta_i);
        return {0.0, 0.0, p * std::sin(m), p * std::cos(m), 0.0, 0.0};
    }
    return {0.0, 0.0, p * std::cos(0.5 * theta_i), p * std::sin(0.5 * theta_i), 0.0, 0.0};
}

double return_angle(double p_mu, double p_nu) {
    return 2.0 * std::atan2(std::abs(p_nu), std::abs(p_mu));
}

Deviations initial_deviations(const PhaseState& x) {
    const double p = std::hypot(x.p_mu, x.p_nu);
    const double n_mu = -x.p_nu / p, n_nu = x.p_mu / p;
    Deviations d = Deviations::Zero();
    d(0, 0) = n_mu;
    d(1, 0) = n_nu;
    d(2, 1) = n_mu;
    d(3, 1) = n_nu;
    return d;
}

Eigen::Matrix2d transverse_monodromy(const PhaseState& x, const Deviations& d, ScaledEnergy e) {
    const double p2 = x.p_mu * x.p_mu + x.p_nu * x.p_nu;
    const double p = std::sqrt(p2);
    const double n_mu = -x.p_nu / p, n_nu = x.p_mu / p;
    const auto g = potential_gradient(x.mu, x.nu, e.value());
    Eigen::Matrix2d m;
    for (int c = 0; c < 2; ++c) {
        const double dq_mu = d(0, c), dq_nu = d(1, c), dp_mu = d(2, c), dp_nu = d(3, c);
        // Remove the component along the flow (p, -grad V).
        const double shift = (dq_mu * x.p_mu + dq_nu * x.p_nu) / p2;
        m(0, c) = dq_mu * n_mu + dq_nu * n_nu;
        m(1, c) = (dp_mu + shift * g.mu) * n_mu + (dp_nu + shift * g.nu) * n_nu;
    }
    return m;
}

TrajectoryRecord integrate(const PhaseState& state0, ScaledEnergy e, double s_limit, const EventSpec& events,
                           const IntegrationOptions& options) {
    return integrate(state0, initial_deviations(state0), e, s_limit, events, options);
}

TrajectoryRecord integrate(const PhaseState& state0, const Deviations& dev0, ScaledEnergy e, double s_limit,
                           const EventSpec& events, const IntegrationOptions& options) {
    if (options.monodromy) return run<kFullDim>(pack_full(state0, dev0), state0.t, e, s_limit, events, options);
    const std::array<double, kPhaseDim> y{state0.mu, state0.nu, state0.p_mu, state0.p_nu, state0.s};
    return run<kPhaseDim>(y, state0.t, e, s_limit, events, options);
}

}  // namespace coh
