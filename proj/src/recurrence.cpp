#include "coh/recurrence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "coh/parallel.hpp"

namespace coh {

namespace {

constexpr double kPi = std::numbers::pi;

// exp(i(pi/4 - pi/2 maslov)) with the quarter turns taken exactly.
cplx maslov_phase(int maslov) {
    static const cplx quarter[4] = {{1.0, 0.0}, {0.0, -1.0}, {-1.0, 0.0}, {0.0, 1.0}};
    const cplx base = std::polar(1.0, kPi / 4.0);
    return base * quarter[((maslov % 4) + 4) % 4];
}

// Orbits per partial grid when building signals. Fixed so the summation
// order does not depend on the number of threads.
constexpr std::size_t kChunk = 64;

// Gaussian tails beyond this many widths are dropped (exp(-50) ~ 2e-22).
constexpr double kTailWidths = 10.0;

}  // namespace

cplx spike_amplitude(const ClosedOrbit& o, const AngularFunction& fa, const AngularFunction& fb) {
    if (std::abs(o.m12) < kFocalThreshold) {
        std::ostringstream os;
        os << "focal singularity: |m12| = " << std::abs(o.m12) << " for orbit " << o.id;
        throw FocalSingularity(os.str());
    }
    const double si = std::sin(o.theta_i), sf = std::sin(o.theta_f);
    const double angular = std::sqrt(std::max(0.0, si * sf)) * evaluate(fa, o.theta_i) * evaluate(fb, o.theta_f);
    if (angular == 0.0) return {0.0, 0.0};
    const double prefactor = -std::pow(2.0 * kPi, 2.5) / std::sqrt(std::abs(o.m12));
    return prefactor * angular * maslov_phase(o.maslov);
}

SampledSignal SampledSignal::select(std::span<const int> channels) const {
    SampledSignal out;
    out.tau = tau;
    out.sigma = sigma;
    out.L = static_cast<int>(channels.size());
    out.meta = meta;
    out.meta.channels.clear();
    for (int c : channels) {
        if (c < 0 || c >= L) throw std::out_of_range("channel index out of range");
        if (static_cast<std::size_t>(c) < meta.channels.size()) out.meta.channels.push_back(meta.channels[c]);
    }
    const std::size_t n = size();
    out.data.resize(n * out.L * out.L);
    for (std::size_t k = 0; k < n; ++k)
        for (int a = 0; a < out.L; ++a)
            for (int b = 0; b < out.L; ++b) out.at(k, a, b) = at(k, channels[a], channels[b]);
    return out;
}

SampledSignal build_signal(const std::vector<ClosedOrbit>& orbits, const std::vector<AngularFunction>& channels,
                           double sigma, double tau, double s_max, BuildReport* report,
                           double asymmetry_tolerance) {
    if (orbits.empty()) throw std::invalid_argument("empty orbit list");
    if (channels.empty()) throw std::invalid_argument("no channels");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (sigma < tau) throw std::invalid_argument("sigma < tau undersamples the spikes");
    for (const auto& o : orbits)
        if (o.s > s_max) throw std::invalid_argument("orbit action exceeds s_max");

    const int L = static_cast<int>(channels.size());
    const std::size_t n = static_cast<std::size_t>(std::floor(s_max / tau * (1.0 + 1e-14))) + 1;
    const std::size_t LL = static_cast<std::size_t>(L * L);

    BuildReport local;
    BuildReport& rep = report ? *report : local;

    // Amplitudes first (cheap), with diagnostics in orbit order.
    std::vector<std::vector<cplx>> amps(orbits.size());
    for (std::size_t i = 0; i < orbits.size(); ++i) {
        const auto& o = orbits[i];
        std::vector<cplx> A(LL);
        try {
            bool any = false;
            for (int a = 0; a < L; ++a)
                for (int b = 0; b < L; ++b) {
                    A[a * L + b] = spike_amplitude(o, channels[a], channels[b]);
                    any = any || A[a * L + b] != cplx{};
                }
            if (!any) {
                ++rep.skipped_zero;
                rep.log.push_back("orbit " + std::to_string(o.id) + ": zero amplitude, skipped");
                continue;
            }
        } catch (const FocalSingularity& ex) {
            ++rep.skipped_focal;
            rep.log.push_back(ex.what());
            continue;
        }
        amps[i] = std::move(A);
        ++rep.used;
    }

    const std::size_t chunks = (orbits.size() + kChunk - 1) / kChunk;
    std::vector<std::vector<cplx>> partial(chunks);
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * kPi));
    parallel_for(chunks, default_threads(), [&](std::size_t c) {
        auto& grid = partial[c];
        grid.assign(n * LL, cplx{});
        const std::size_t end = std::min(orbits.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            if (amps[i].empty()) continue;
            const double s = orbits[i].s;
            const double lo = std::max(0.0, std::ceil((s - kTailWidths * sigma) / tau));
            const double hi = std::min(static_cast<double>(n - 1), std::floor((s + kTailWidths * sigma) / tau));
            for (auto k = static_cast<std::size_t>(lo); static_cast<double>(k) <= hi; ++k) {
                const double x = (static_cast<double>(k) * tau - s) / sigma;
                const double g = norm * std::exp(-0.5 * x * x);
                for (std::size_t q = 0; q < LL; ++q) grid[k * LL + q] += amps[i][q] * g;
            }
        }
    });

    SampledSignal out;
    out.tau = tau;
    out.sigma = sigma;
    out.L = L;
    out.data.assign(n * LL, cplx{});
    for (const auto& grid : partial)
        for (std::size_t q = 0; q < grid.size(); ++q) out.data[q] += grid[q];

    double max_abs = 0.0, max_asym = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        for (int a = 0; a < L; ++a)
            for (int b = 0; b < L; ++b) {
                max_abs = std::max(max_abs, std::abs(out.at(k, a, b)));
                if (b > a) max_asym = std::max(max_asym, std::abs(out.at(k, a, b) - out.at(k, b, a)));
            }
    const double rel = max_abs > 0.0 ? max_asym / max_abs : 0.0;
    if (rel > asymmetry_tolerance) {
        std::ostringstream os;
        os << "signal asymmetry " << rel << " exceeds " << asymmetry_tolerance
           << " (time-reversed partner orbits missing?)";
        throw std::runtime_error(os.str());
    }
    for (std::size_t k = 0; k < n; ++k)
        for (int a = 0; a < L; ++a)
            for (int b = a + 1; b < L; ++b) {
                const cplx m = 0.5 * (out.at(k, a, b) + out.at(k, b, a));
                out.at(k, a, b) = m;
                out.at(k, b, a) = m;
            }

    out.meta.source = "closed-orbits";
    out.meta.channels = channels;
    out.meta.max_asymmetry = rel;
    return out;
}

namespace {

SampledSignal synth(const SpectralLineSet& lines, double tau, std::size_t n, double sigma) {
    if (n < 1) throw std::invalid_argument("need at least one sample");
    if (lines.empty()) throw std::invalid_argument("empty line set");
    const int L = static_cast<int>(lines.front().b.size());
    for (const auto& l : lines)
        if (static_cast<int>(l.b.size()) != L) throw std::invalid_argument("inconsistent channel count");
    SampledSignal out;
    out.tau = tau;
    out.sigma = sigma;
    out.L = L;
    out.data.assign(n * L * L, cplx{});
    const cplx mi{0.0, -1.0};
    for (const auto& l : lines) {
        const cplx damp = sigma > 0.0 ? std::exp(-0.5 * sigma * sigma * l.w * l.w) : cplx{1.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) {
            const cplx e = mi * damp * std::exp(mi * l.w * (static_cast<double>(k) * tau));
            for (int a = 0; a < L; ++a)
                for (int b = 0; b < L; ++b) out.at(k, a, b) += e * l.b[a] * l.b[b];
        }
    }
    out.meta.source = "synthetic";
    return out;
}

}  // namespace

SampledSignal synth_quantum_signal(const SpectralLineSet& lines, double tau, std::size_t n) {
    return synth(lines, tau, n, 0.0);
}

SampledSignal synth_smoothed_signal(const SpectralLineSet& lines, double tau, std::size_t n, double sigma) {
    return synth(lines, tau, n, sigma);
}

std::vector<Eigen::MatrixXcd> evaluate_gsc_smoothed(const std::vector<ClosedOrbit>& orbits,
                                                    const std::vector<AngularFunction>& channels,
                                                    std::span<const double> w_grid, double s_cutoff,
                                                    double damping) {
    const int L = static_cast<int>(channels.size());
    std::vector<Eigen::MatrixXcd> out(w_grid.size(), Eigen::MatrixXcd::Zero(L, L));
    for (double w : w_grid)
        if (!(w > 0.0)) throw std::invalid_argument("w grid must be positive");
    for (const auto& o : orbits) {
        if (o.s > s_cutoff) continue;
        Eigen::MatrixXcd A(L, L);
        try {
            for (int a = 0; a < L; ++a)
                for (int b = 0; b < L; ++b) A(a, b) = spike_amplitude(o, channels[a], channels[b]);
        } catch (const FocalSingularity&) {
            continue;
        }
        if (A.isZero(0.0)) continue;
        const double d = std::exp(-damping * o.s * o.s);
        for (std::size_t i = 0; i < w_grid.size(); ++i)
            out[i] += A * (d * std::polar(1.0, o.s * w_grid[i]));
    }
    for (std::size_t i = 0; i < w_grid.size(); ++i) out[i] /= std::sqrt(w_grid[i]);
    return out;
}

MagnitudeSpectrum fourier_recurrence(std::span<const cplx> samples, double x0, double dx,
                                     std::span<const double> conjugate_grid, int sign, bool window) {
    MagnitudeSpectrum out;
    out.axis.assign(conjugate_grid.begin(), conjugate_grid.end());
    out.magnitude.resize(conjugate_grid.size());
    const std::size_t n = samples.size();
    std::vector<cplx> weighted(samples.begin(), samples.end());
    if (window && n > 1)
        for (std::size_t k = 0; k < n; ++k)
            weighted[k] *= 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(n - 1)));
    const double sg = sign < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < conjugate_grid.size(); ++i) {
        const double y = conjugate_grid[i];
        // Phase advanced by a rotation per sample; re-anchored every 256
        // samples to keep the error at rounding level.
        cplx acc{};
        const cplx step = std::polar(1.0, sg * y * dx);
        cplx rot{};
        for (std::size_t k = 0; k < n; ++k) {
            if (k % 256 == 0) rot = std::polar(1.0, sg * y * (x0 + static_cast<double>(k) * dx));
            acc += weighted[k] * rot;
            rot *= step;
        }
        out.magnitude[i] = std::abs(acc) * dx;
    }
    return out;
}

double default_tau(double w_max) {
    if (!(w_max > 0.0)) throw std::invalid_argument("w_max must be positive");
    return std::min(0.05, kPi / (1.2 * w_max));
}

// ---------------------------------------------------------------------------
// Signal files

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

double parse_double(const std::string& tok) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto res = std::from_chars(tok.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw std::runtime_error("bad number '" + tok + "'");
    return v;
}

}  // namespace

void write_signal(std::ostream& os, const SampledSignal& sig) {
    os << "# cross-correlated recurrence signal\n";
    os << "tool_version " << sig.meta.tool_version << "\n";
    os << "source " << (sig.meta.source.empty() ? "unknown" : sig.meta.source) << "\n";
    os << "tau " << fmt(sig.tau) << "\n";
    os << "n " << sig.size() << "\n";
    os << "L " << sig.L << "\n";
    os << "sigma " << fmt(sig.sigma) << "\n";
    os << "scaled_energy " << fmt(sig.meta.scaled_energy) << "\n";
    os << "swave_constant " << fmt(sig.meta.swave_constant) << "\n";
    os << "max_asymmetry " << fmt(sig.meta.max_asymmetry) << "\n";
    os << "orbit_table_hash " << (sig.meta.orbit_table_hash.empty() ? "-" : sig.meta.orbit_table_hash) << "\n";
    for (const auto& ch : sig.meta.channels) {
        std::string label = ch.label.empty() ? "-" : ch.label;
        std::replace(label.begin(), label.end(), ' ', '_');
        os << "channel " << label << " " << ch.coeffs.size();
        for (double c : ch.coeffs) os << " " << fmt(c);
        os << "\n";
    }
    os << "data\n";
    const std::size_t n = sig.size();
    const std::size_t LL = static_cast<std::size_t>(sig.L * sig.L);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t q = 0; q < LL; ++q) {
            const cplx& v = sig.data[k * LL + q];
            os << (q ? " " : "") << fmt(v.real()) << " " << fmt(v.imag());
        }
        os << "\n";
    }
}

SampledSignal read_signal(std::istream& is) {
    SampledSignal sig;
    std::size_t n = 0;
    bool have_data = false;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string val;
        if (key == "data") {
            have_data = true;
            break;
        } else if (key == "channel") {
            AngularFunction f;
            std::size_t m = 0;
            ls >> f.label >> m;
            for (std::size_t i = 0; i < m; ++i) {
                std::string tok;
                if (!(ls >> tok)) throw std::runtime_error("truncated channel record");
                f.coeffs.push_back(parse_double(tok));
            }
            sig.meta.channels.push_back(std::move(f));
            continue;
        }
        std::getline(ls >> std::ws, val);
        if (key == "tool_version") sig.meta.tool_version = val;
        else if (key == "source") sig.meta.source = val;
        else if (key == "tau") sig.tau = parse_double(val);
        else if (key == "n") n = std::stoull(val);
        else if (key == "L") sig.L = std::stoi(val);
        else if (key == "sigma") sig.sigma = parse_double(val);
        else if (key == "scaled_energy") sig.meta.scaled_energy = parse_double(val);
        else if (key == "swave_constant") sig.meta.swave_constant = parse_double(val);
        else if (key == "max_asymmetry") sig.meta.max_asymmetry = parse_double(val);
        else if (key == "orbit_table_hash") sig.meta.orbit_table_hash = val == "-" ? "" : val;
        else throw std::runtime_error("unknown signal header key '" + key + "'");
    }
    if (!have_data) throw std::runtime_error("signal file has no data section");
    if (sig.L <= 0 || !(sig.tau > 0.0)) throw std::runtime_error("signal header incomplete");
    const std::size_t LL = static_cast<std::size_t>(sig.L * sig.L);
    sig.data.resize(n * LL);
    std::string re, im;
    for (std::size_t q = 0; q < n * LL; ++q) {
        if (!(is >> re >> im)) throw std::runtime_error("signal data truncated");
        sig.data[q] = {parse_double(re), parse_double(im)};
    }
    return sig;
}

}  // namespace coh
