#include "coh/harmonic_inversion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "coh/parallel.hpp"

namespace coh {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI{0.0, 1.0};

struct Basis {
    std::vector<cplx> z;                  // z_j = exp(-i tau phi_j)
    std::vector<std::vector<cplx>> zinv;  // z_j^-m, m = 0..2M
};

Basis make_basis(double lo, double hi, int J, int M, double tau) {
    Basis B;
    B.z.resize(J);
    B.zinv.resize(J);
    for (int j = 0; j < J; ++j) {
        const double phi = J == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * j / (J - 1);
        B.z[j] = std::polar(1.0, -tau * phi);
        auto& p = B.zinv[j];
        p.resize(2 * M + 1);
        for (int m = 0; m <= 2 * M; ++m) p[m] = std::polar(1.0, tau * phi * m);
    }
    return B;
}

// Per basis frequency and channel pair: f_p, g_p and the diagonal sum for
// p = 0, 1 (see the closed form in build_u).
struct Sums {
    std::vector<cplx> f[2], g[2], d[2];  // index (j * L + a) * L + b
};

Sums make_sums(const std::vector<cplx>& c, int L, int M, const Basis& B) {
    const int J = static_cast<int>(B.z.size());
    const std::size_t LL = static_cast<std::size_t>(L * L);
    Sums S;
    for (int p = 0; p < 2; ++p) {
        S.f[p].assign(J * LL, cplx{});
        S.g[p].assign(J * LL, cplx{});
        S.d[p].assign(J * LL, cplx{});
    }
    parallel_for(static_cast<std::size_t>(J), default_threads(), [&](std::size_t j) {
        const auto& zi = B.zinv[j];
        const cplx zM1 = zi[M + 1];  // z^-(M+1), so z^(M+1-m) = z^-m / z^-(M+1)
        for (std::size_t q = 0; q < LL; ++q) {
            for (int p = 0; p < 2; ++p) {
                cplx f{}, g{}, d{};
                for (int m = 0; m <= 2 * M; ++m) {
                    const cplx t = c[(m + p) * LL + q] * zi[m];
                    if (m <= M) {
                        f += t;
                        d += t * static_cast<double>(m + 1);
                    } else {
                        g += t;
                        d += t * static_cast<double>(2 * M - m + 1);
                    }
                }
                S.f[p][j * LL + q] = f;
                S.g[p][j * LL + q] = g / zM1;
                S.d[p][j * LL + q] = d;
            }
        }
    });
    return S;
}

// U^(p)_{(ja),(j'b)} = sum_{n,n'=0}^{M} z_j^-n z_j'^-n' c_ab(n + n' + p), by
//   [z f(z') - z' f(z) + z'^-M g(z) - z^-M g(z')] / (z - z')
// off the diagonal in j.
Eigen::MatrixXcd build_u(int p, const Sums& S, const Basis& B, int L, int M) {
    const int J = static_cast<int>(B.z.size());
    const int K = J * L;
    const std::size_t LL = static_cast<std::size_t>(L * L);
    Eigen::MatrixXcd U(K, K);
    parallel_for(static_cast<std::size_t>(J), default_threads(), [&](std::size_t j) {
        const cplx z = B.z[j];
        const cplx zM = B.zinv[j][M];
        for (int jp = 0; jp < J; ++jp) {
            const cplx zp = B.z[jp];
            const cplx zpM = B.zinv[jp][M];
            for (int a = 0; a < L; ++a)
                for (int b = 0; b < L; ++b) {
                    const std::size_t q = static_cast<std::size_t>(a * L + b);
                    cplx v;
                    if (static_cast<int>(j) == jp) {
                        v = S.d[p][j * LL + q];
                    } else {
                        v = (z * S.f[p][jp * LL + q] - zp * S.f[p][j * LL + q] + zpM * S.g[p][j * LL + q] -
                             zM * S.g[p][jp * LL + q]) /
                            (z - zp);
                    }
                    U(static_cast<int>(j) * L + a, jp * L + b) = v;
                }
        }
    });
    return U;
}

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

void fix_gauge(SpectralLine& line) {
    if (line.b.empty()) return;
    std::size_t best = 0;
    for (std::size_t a = 1; a < line.b.size(); ++a)
        if (std::abs(line.b[a]) > std::abs(line.b[best])) best = a;
    if (line.b[best].real() < 0.0)
        for (auto& x : line.b) x = -x;
}

SpectralLineSet invert(const SampledSignal& signal, const InversionConfig& cfg, InversionDiagnostics* diag) {
    const double tau = signal.tau;
    const int L = signal.L;
    if (L < 1 || !(tau > 0.0)) throw std::invalid_argument("invalid signal");
    if (!(cfg.w_min > 0.0) || !(cfg.w_max > cfg.w_min)) throw std::invalid_argument("invalid window");
    const double width = cfg.w_max - cfg.w_min;
    const double lo = std::max(0.5 * cfg.w_min, cfg.w_min - cfg.margin * width);
    const double hi = cfg.w_max + cfg.margin * width;
    if (hi * tau >= kPi) {
        std::ostringstream os;
        os << "window upper edge " << hi << " (with margin) violates the Nyquist limit pi/tau = " << kPi / tau;
        throw NyquistViolation(os.str());
    }

    const std::size_t n = signal.size();
    const int M = cfg.M > 0 ? cfg.M : static_cast<int>((n - 2) / 2);
    if (n < 2 || static_cast<std::size_t>(2 * M + 2) > n)
        throw std::invalid_argument("signal too short for M = " + std::to_string(M));
    int J = cfg.J;
    if (J <= 0) J = std::max(2, static_cast<int>(std::ceil((hi - lo) * M * tau / (2.0 * kPi))) + 1);

    InversionDiagnostics local;
    InversionDiagnostics& dg = diag ? *diag : local;
    dg = {};
    dg.K = J * L;

    // Model C(n tau) = sum_k d_k exp(-i n tau w_k) after multiplication by i.
    const std::size_t LL = static_cast<std::size_t>(L * L);
    std::vector<cplx> c(static_cast<std::size_t>(2 * M + 2) * LL);
    for (std::size_t q = 0; q < c.size(); ++q) c[q] = kI * signal.data[q];

    const Basis B = make_basis(lo, hi, J, M, tau);
    const Sums S = make_sums(c, L, M, B);
    const Eigen::MatrixXcd U0 = build_u(0, S, B, L, M);
    const Eigen::MatrixXcd U1 = build_u(1, S, B, L, M);

    Eigen::BDCSVD<Eigen::MatrixXcd> svd(U0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv(0) > 0.0)) return {};
    int r = 0;
    while (r < sv.size() && sv(r) > cfg.svd_cutoff * sv(0)) ++r;
    dg.rank = r;
    dg.condition = sv(0) / sv(r - 1);

    const Eigen::MatrixXcd P = svd.matrixU().leftCols(r);
    const Eigen::MatrixXcd Q = svd.matrixV().leftCols(r);
    const Eigen::VectorXd sinv = sv.head(r).cwiseInverse();
    const Eigen::MatrixXcd A = sinv.asDiagonal() * (P.adjoint() * U1 * Q);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, true);
    if (es.info() != Eigen::Success) {
        std::ostringstream os;
        os << "eigen-solver failed (K = " << dg.K << ", rank = " << r << ", condition = " << dg.condition << ")";
        throw std::runtime_error(os.str());
    }
    const Eigen::MatrixXcd Bv = Q * es.eigenvectors();
    dg.raw_lines = static_cast<std::size_t>(r);

    SpectralLineSet lines;
    for (int k = 0; k < r; ++k) {
        const cplx u = es.eigenvalues()(k);
        if (u == cplx{}) continue;
        const cplx w = kI * std::log(u) / tau;
        if (w.real() < cfg.w_min || w.real() > cfg.w_max) {
            ++dg.outside;
            continue;
        }
        if (std::abs(w.imag()) > cfg.accept_im) {
            ++dg.rejected_im;
            continue;
        }
        Eigen::VectorXcd v = Bv.col(k);
        const cplx nrm = (v.transpose() * U0 * v)(0, 0);
        if (nrm == cplx{}) continue;
        v /= std::sqrt(nrm);
        SpectralLine line;
        line.w = w;
        line.b.assign(L, cplx{});
        for (int a = 0; a < L; ++a) {
            cplx acc{};
            for (int j = 0; j < J; ++j)
                for (int b = 0; b < L; ++b) acc += v(j * L + b) * S.f[0][j * LL + b * L + a];
            line.b[a] = acc;
        }
        if (signal.sigma > 0.0) {
            const cplx f = std::exp(signal.sigma * signal.sigma * w * w / 4.0);
            for (auto& x : line.b) x *= f;
        }
        fix_gauge(line);
        lines.push_back(std::move(line));
    }
    std::sort(lines.begin(), lines.end(), [](const SpectralLine& x, const SpectralLine& y) {
        return x.w.real() < y.w.real();
    });
    return lines;
}

SpectralLineSet cross_validate(const SpectralLineSet& a, const SpectralLineSet& b, double tol_w, double tol_b) {
    auto nearest = [](const SpectralLine& x, const SpectralLineSet& set) {
        std::size_t best = set.size();
        double dbest = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < set.size(); ++i) {
            const double d = std::abs(set[i].w - x.w);
            if (d < dbest) {
                dbest = d;
                best = i;
            }
        }
        return std::pair{best, dbest};
    };
    SpectralLineSet out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto [j, dw] = nearest(a[i], b);
        if (j == b.size() || dw > tol_w) continue;
        if (nearest(b[j], a).first != i) continue;  // not mutual
        if (a[i].b.size() != b[j].b.size()) continue;
        double plus = 0.0, minus = 0.0;
        for (std::size_t c = 0; c < a[i].b.size(); ++c) {
            plus = std::max(plus, std::abs(a[i].b[c] - b[j].b[c]));
            minus = std::max(minus, std::abs(a[i].b[c] + b[j].b[c]));
        }
        const double db = std::min(plus, minus);
        if (db > tol_b) continue;
        SpectralLine line = a[i];
        line.err_w = std::max(a[i].err_w, dw);
        line.err_b = std::max(a[i].err_b, db);
        out.push_back(std::move(line));
    }
    return out;
}

SpectralLineSet invert_validated(const SampledSignal& signal, const InversionConfig& cfg) {
    const std::size_t n = signal.size();
    const int M = cfg.M > 0 ? cfg.M : static_cast<int>((n - 2) / 2);
    InversionConfig full = cfg, part = cfg;
    full.M = M;
    part.M = std::max(1, (3 * M) / 4);
    // Same basis density for both inversions.
    if (cfg.J <= 0) {
        const double width = cfg.w_max - cfg.w_min;
        const double lo = std::max(0.5 * cfg.w_min, cfg.w_min - cfg.margin * width);
        const double hi = cfg.w_max + cfg.margin * width;
        full.J = part.J =
            std::max(2, static_cast<int>(std::ceil((hi - lo) * M * signal.tau / (2.0 * kPi))) + 1);
    }
    const auto a = invert(signal, full);
    const auto b = invert(signal, part);
    return cross_validate(a, b, cfg.accept_err, std::numeric_limits<double>::infinity());
}

SpectralLineSet invert_range(const SampledSignal& signal, double w_lo, double w_hi, const InversionConfig& cfg,
                             double max_width, double overlap) {
    if (!(w_hi > w_lo)) throw std::invalid_argument("empty range");
    const double total = w_hi - w_lo;
    int nw = 1;
    auto width_for = [&](int k) { return total / (k - (k - 1) * overlap); };
    while (width_for(nw) > max_width) ++nw;
    const double W = width_for(nw);
    const double stride = W * (1.0 - overlap);

    std::vector<SpectralLineSet> found(nw);
    parallel_for(static_cast<std::size_t>(nw), default_threads(), [&](std::size_t i) {
        InversionConfig c = cfg;
        c.w_min = w_lo + stride * static_cast<double>(i);
        c.w_max = c.w_min + W;
        found[i] = invert_validated(signal, c);
    });

    // Core regions split the overlaps at their midpoints.
    SpectralLineSet out;
    for (int i = 0; i < nw; ++i) {
        const double lo_i = w_lo + stride * i;
        const double core_lo = i == 0 ? w_lo : lo_i + 0.5 * overlap * W;
        const double core_hi = i == nw - 1 ? w_hi : lo_i + W - 0.5 * overlap * W;
        for (const auto& l : found[i]) {
            const double w = l.w.real();
            if (w >= core_lo && (w < core_hi || (i == nw - 1 && w <= core_hi))) out.push_back(l);
        }
    }
    std::sort(out.begin(), out.end(), [](const SpectralLine& x, const SpectralLine& y) {
        return x.w.real() < y.w.real();
    });
    return out;
}

std::optional<double> recommend_signal_length(const SpectralLineSet& lines, double w_min, double w_max) {
    if (lines.size() < 2 || !(w_max > w_min)) return std::nullopt;
    const double rho = static_cast<double>(lines.size()) / (w_max - w_min);
    return 4.0 * kPi * rho;
}

void write_line_set(std::ostream& os, const SpectralLineSet& lines, const LineSetMeta& meta) {
    os << "# spectral lines: Re_w Im_w (Re_b Im_b per channel) err_w err_b\n";
    os << "tool_version " << meta.tool_version << "\n";
    os << "window " << fmt(meta.w_min) << " " << fmt(meta.w_max) << "\n";
    os << "J " << meta.J << "\n";
    os << "M " << meta.M << "\n";
    os << "tau " << fmt(meta.tau) << "\n";
    os << "sigma " << fmt(meta.sigma) << "\n";
    os << "L " << meta.L << "\n";
    os << "signal_hash " << (meta.signal_hash.empty() ? "-" : meta.signal_hash) << "\n";
    os << "count " << lines.size() << "\n";
    os << "lines\n";
    for (const auto& l : lines) {
        if (static_cast<int>(l.b.size()) != meta.L) throw std::invalid_argument("line channel count mismatch");
        os << fmt(l.w.real()) << " " << fmt(l.w.imag());
        for (const auto& x : l.b) os << " " << fmt(x.real()) << " " << fmt(x.imag());
        os << " " << fmt(l.err_w) << " " << fmt(l.err_b) << "\n";
    }
}

SpectralLineSet read_line_set(std::istream& is, LineSetMeta* meta) {
    LineSetMeta m;
    std::size_t count = 0;
    bool have_lines = false;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "lines") {
            have_lines = true;
            break;
        }
        std::string a, b;
        ls >> a;
        if (key == "tool_version") {
            std::string rest;
            std::getline(ls, rest);
            m.tool_version = a + rest;
        } else if (key == "window") {
            ls >> b;
            m.w_min = parse_double(a);
            m.w_max = parse_double(b);
        } else if (key == "J") m.J = std::stoi(a);
        else if (key == "M") m.M = std::stoi(a);
        else if (key == "tau") m.tau = parse_double(a);
        else if (key == "sigma") m.sigma = parse_double(a);
        else if (key == "L") m.L = std::stoi(a);
        else if (key == "signal_hash") m.signal_hash = a == "-" ? "" : a;
        else if (key == "count") count = std::stoull(a);
        else throw std::runtime_error("unknown line-set header key '" + key + "'");
    }
    if (!have_lines || m.L <= 0) throw std::runtime_error("line-set file header incomplete");
    SpectralLineSet out(count);
    auto next = [&] {
        std::string tok;
        if (!(is >> tok)) throw std::runtime_error("line-set data truncated");
        return parse_double(tok);
    };
    for (auto& l : out) {
        const double re = next();
        l.w = {re, next()};
        l.b.resize(m.L);
        for (auto& x : l.b) {
            const double xr = next();
            x = {xr, next()};
        }
        l.err_w = next();
        l.err_b = next();
    }
    if (meta) *meta = m;
    return out;
}

}  // namespace coh
