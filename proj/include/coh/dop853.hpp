// Adaptive Dormand-Prince 8(5,3) integrator with 7th-order dense output.
//
// Autonomous systems only: the right-hand side is a callable
// `void(const State& y, State& dydt)`. The stepper advances one accepted
// step at a time so that callers can inspect every step (event location,
// monitoring) through the dense interpolant of the last step.
//
// Only the first Ncontrol components enter step-size control, so a system
// augmented by variational equations follows the same step sequence (and the
// same base trajectory) as the bare system.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

#include "coh/dop853_tableau.hpp"

namespace coh {

struct StepControl {
    double rtol = 1e-12;
    double atol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    double first_step = 0.0;  // 0 selects an automatic guess
};

template <std::size_t N, class Rhs, std::size_t Ncontrol = N>
class Dop853 {
    static_assert(Ncontrol >= 1 && Ncontrol <= N);
public:
    using State = std::array<double, N>;

    Dop853(Rhs rhs, const State& y0, double t0, StepControl ctl)
        : rhs_(std::move(rhs)), ctl_(ctl), t_(t0), y_(y0) {
        rhs_(y_, f_);
        h_ = ctl_.first_step > 0.0 ? ctl_.first_step : initial_step();
    }

    double t() const { return t_; }
    const State& y() const { return y_; }
    const State& dydt() const { return f_; }
    double t_old() const { return t_old_; }
    const State& y_old() const { return y_old_; }
    long steps() const { return n_accepted_; }
    long rejected() const { return n_rejected_; }

    // Advances by one accepted step. Returns false on step-size underflow;
    // the state is then left at the last accepted point.
    bool step() {
        constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 10.0;
        bool rejected = false;
        for (;;) {
            const double min_step = 10.0 * std::abs(std::nextafter(t_, INFINITY) - t_);
            double h = std::min(h_, ctl_.max_step);
            if (h < min_step) return false;

            attempt(h);
            const double err = error_norm(h);
            if (err < 1.0) {
                double factor = err == 0.0 ? kMaxFactor
                                           : std::min(kMaxFactor, kSafety * std::pow(err, -1.0 / 8.0));
                if (rejected) factor = std::min(1.0, factor);
                t_old_ = t_;
                y_old_ = y_;
                f_old_ = f_;
                t_ += h;
                y_ = y_new_;
                f_ = k_[dop853::kStages];
                h_last_ = h;
                h_ = h * factor;
                dense_ready_ = false;
                ++n_accepted_;
                return true;
            }
            h_ = h * std::max(kMinFactor, kSafety * std::pow(err, -1.0 / 8.0));
            rejected = true;
            ++n_rejected_;
        }
    }

    // Interpolated state inside the last accepted step, t in [t_old, t].
    State dense(double t) {
        if (!dense_ready_) build_dense();
        const double x = (t - t_old_) / h_last_;
        State y{};
        for (int i = dop853::kInterpolatorPower - 1; i >= 0; --i) {
            for (std::size_t n = 0; n < N; ++n) y[n] += dense_[i][n];
            const double w = ((dop853::kInterpolatorPower - 1 - i) % 2 == 0) ? x : 1.0 - x;
            for (std::size_t n = 0; n < N; ++n) y[n] *= w;
        }
        for (std::size_t n = 0; n < N; ++n) y[n] += y_old_[n];
        return y;
    }

    // Restarts from an externally supplied state, e.g. after truncating a
    // step at an event.
    void reset(const State& y, double t) {
        y_ = y;
        t_ = t;
        rhs_(y_, f_);
        dense_ready_ = false;
    }

private:
    void attempt(double h) {
        k_[0] = f_;
        State tmp;
        for (int s = 1; s < dop853::kStages; ++s) {
            for (std::size_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (int j = 0; j < s; ++j) acc += dop853::A[s][j] * k_[j][n];
                tmp[n] = y_[n] + h * acc;
            }
            rhs_(tmp, k_[s]);
        }
        for (std::size_t n = 0; n < N; ++n) {
            double acc = 0.0;
            for (int j = 0; j < dop853::kStages; ++j) acc += dop853::A[dop853::kStages][j] * k_[j][n];
            y_new_[n] = y_[n] + h * acc;
        }
        rhs_(y_new_, k_[dop853::kStages]);
    }

    double error_norm(double h) const {
        double e5 = 0.0, e3 = 0.0;
        for (std::size_t n = 0; n < Ncontrol; ++n) {
            const double scale = ctl_.atol + std::max(std::abs(y_[n]), std::abs(y_new_[n])) * ctl_.rtol;
            double a5 = 0.0, a3 = 0.0;
            for (int j = 0; j <= dop853::kStages; ++j) {
                a5 += dop853::E5[j] * k_[j][n];
                a3 += dop853::E3[j] * k_[j][n];
            }
            e5 += (a5 / scale) * (a5 / scale);
            e3 += (a3 / scale) * (a3 / scale);
        }
        if (e5 == 0.0 && e3 == 0.0) return 0.0;
        return std::abs(h) * e5 / std::sqrt((e5 + 0.01 * e3) * static_cast<double>(Ncontrol));
    }

    void build_dense() {
        // k_[0..12] still hold the stages of the accepted step.
        const double h = h_last_;
        State tmp;
        for (int s = dop853::kStages + 1; s < dop853::kStagesExtended; ++s) {
            for (std::size_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (int j = 0; j < s; ++j) acc += dop853::A[s][j] * k_[j][n];
                tmp[n] = y_old_[n] + h * acc;
            }
            rhs_(tmp, k_[s]);
        }
        for (std::size_t n = 0; n < N; ++n) {
            const double dy = y_[n] - y_old_[n];
            dense_[0][n] = dy;
            dense_[1][n] = h * f_old_[n] - dy;
            dense_[2][n] = 2.0 * dy - h * (f_[n] + f_old_[n]);
            for (int r = 0; r < dop853::kInterpolatorPower - 3; ++r) {
                double acc = 0.0;
                for (int j = 0; j < dop853::kStagesExtended; ++j) acc += dop853::D[r][j] * k_[j][n];
                dense_[3 + r][n] = h * acc;
            }
        }
        dense_ready_ = true;
    }

    double initial_step() {
        auto rms = [](const State& v, const State& scale) {
            double s = 0.0;
            for (std::size_t n = 0; n < Ncontrol; ++n) s += (v[n] / scale[n]) * (v[n] / scale[n]);
            return std::sqrt(s / static_cast<double>(Ncontrol));
        };
        State scale;
        for (std::size_t n = 0; n < N; ++n) scale[n] = ctl_.atol + std::abs(y_[n]) * ctl_.rtol;
        const double d0 = rms(y_, scale), d1 = rms(f_, scale);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        State y1, f1;
        for (std::size_t n = 0; n < N; ++n) y1[n] = y_[n] + h0 * f_[n];
        rhs_(y1, f1);
        State df;
        for (std::size_t n = 0; n < N; ++n) df[n] = f1[n] - f_[n];
        const double d2 = rms(df, scale) / h0;
        const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                       : std::pow(0.01 / std::max(d1, d2), 1.0 / 8.0);
        return std::min(100.0 * h0, h1);
    }

    Rhs rhs_;
    StepControl ctl_;
    double t_ = 0.0, t_old_ = 0.0, h_ = 0.0, h_last_ = 0.0;
    State y_{}, f_{}, y_old_{}, f_old_{}, y_new_{};
    std::array<State, dop853::kStagesExtended> k_{};
    std::array<State, dop853::kInterpolatorPower> dense_{};
    bool dense_ready_ = false;
    long n_accepted_ = 0, n_rejected_ = 0;
};

}  // namespace coh
