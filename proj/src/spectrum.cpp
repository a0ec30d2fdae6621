#include "coh/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace coh {

MatrixElement matrix_element(const SpectralLine& line, std::size_t channel) {
    const double w = line.w.real();
    if (!(w > 0.0)) throw std::domain_error("nonpositive Re w");
    if (channel >= line.b.size()) throw std::out_of_range("channel out of range");
    const cplx b = line.b[channel];
    const cplx d = b * b;
    return {b * std::pow(w, -0.25), d.real() / std::sqrt(w), d.imag() / std::sqrt(w)};
}

double gamma_of_w(double w) { return 1.0 / (w * w * w); }
double w_of_gamma(double gamma) { return std::cbrt(1.0 / gamma); }
double field_of_w(double w) { return kAtomicFieldTesla * gamma_of_w(w); }
double energy_of_w(double scaled_energy, double w) { return scaled_energy / (w * w); }

double oscillator_strength(const SpectralLine& line, std::size_t channel, double scaled_energy,
                           double initial_energy) {
    const auto me = matrix_element(line, channel);
    return 2.0 * (energy_of_w(scaled_energy, line.w.real()) - initial_energy) * me.strength;
}

StickSpectrum merge_sticks(StickSpectrum sticks, double merge_tol) {
    std::sort(sticks.begin(), sticks.end(), [](const Stick& a, const Stick& b) { return a.w < b.w; });
    StickSpectrum out;
    for (const auto& s : sticks) {
        if (!out.empty() && s.w - out.back().w <= merge_tol) {
            auto& m = out.back();
            const double total = m.strength + s.strength;
            if (total != 0.0) m.w = (m.w * m.strength + s.w * s.strength) / total;
            m.strength = total;
            m.error += s.error;
        } else {
            out.push_back(s);
        }
    }
    return out;
}

StickSpectrum assemble_stick_spectrum(const SpectralLineSet& lines, std::size_t channel, double merge_tol) {
    StickSpectrum sticks;
    for (const auto& l : lines) {
        if (!(l.w.real() > 0.0)) continue;
        const auto me = matrix_element(l, channel);
        const double root = std::sqrt(l.w.real());
        const double err = std::abs(me.strength_im) + 2.0 * std::abs(l.b[channel]) * l.err_b / root;
        sticks.push_back({l.w.real(), me.strength, err});
    }
    return merge_sticks(std::move(sticks), merge_tol);
}

void write_sticks(std::ostream& os, const StickSpectrum& sticks, const std::vector<std::string>& header) {
    for (const auto& h : header) os << "# " << h << "\n";
    os << "# w strength error\n";
    os << std::setprecision(17);
    for (const auto& s : sticks) os << s.w << " " << s.strength << " " << s.error << "\n";
}

namespace {

constexpr double kWidth = 800, kHeight = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

void open_svg(std::ostream& os, const Frame& f, const std::string& title, const std::string& xl,
              const std::string& yl) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(title)
       << "</text>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
       << f.py(f.y0) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double x = f.x0 + (f.x1 - f.x0) * i / 5.0;
        const double y = f.y0 + (f.y1 - f.y0) * i / 5.0;
        os << "<text x=\"" << f.px(x) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
           << std::setprecision(4) << x << "</text>\n";
        os << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">"
           << std::setprecision(3) << y << "</text>\n";
    }
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">" << esc(xl)
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
       << ")\" text-anchor=\"middle\">" << esc(yl) << "</text>\n";
    os << std::setprecision(7);
}

}  // namespace

void write_stick_svg(std::ostream& os, const StickSpectrum& sticks, const std::string& title,
                     const std::string& y_label) {
    Frame f{0.0, 1.0, 0.0, 1.0};
    if (!sticks.empty()) {
        f.x0 = sticks.front().w;
        f.x1 = sticks.back().w;
        double ymax = 0.0, ymin = 0.0;
        for (const auto& s : sticks) {
            ymax = std::max(ymax, s.strength);
            ymin = std::min(ymin, s.strength);
        }
        const double pad = 0.02 * std::max(1e-12, f.x1 - f.x0);
        f.x0 -= pad;
        f.x1 += pad;
        f.y0 = ymin;
        f.y1 = ymax > ymin ? ymax * 1.05 : ymin + 1.0;
    }
    open_svg(os, f, title, "w", y_label);
    for (const auto& s : sticks)
        os << "<line x1=\"" << f.px(s.w) << "\" y1=\"" << f.py(0.0) << "\" x2=\"" << f.px(s.w) << "\" y2=\""
           << f.py(s.strength) << "\" stroke=\"navy\"/>\n";
    os << "</svg>\n";
}

void write_curve_svg(std::ostream& os, const std::vector<double>& x, const std::vector<double>& y,
                     const std::string& title, const std::string& x_label, const std::string& y_label) {
    if (x.size() != y.size()) throw std::invalid_argument("curve size mismatch");
    Frame f{0.0, 1.0, 0.0, 1.0};
    if (!x.empty()) {
        f.x0 = *std::min_element(x.begin(), x.end());
        f.x1 = *std::max_element(x.begin(), x.end());
        f.y0 = std::min(0.0, *std::min_element(y.begin(), y.end()));
        f.y1 = *std::max_element(y.begin(), y.end());
        if (!(f.x1 > f.x0)) f.x1 = f.x0 + 1.0;
        if (!(f.y1 > f.y0)) f.y1 = f.y0 + 1.0;
    }
    open_svg(os, f, title, x_label, y_label);
    os << "<polyline fill=\"none\" stroke=\"navy\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) os << f.px(x[i]) << "," << f.py(y[i]) << " ";
    os << "\"/>\n</svg>\n";
}

}  // namespace coh
