#include "coh/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "coh/parallel.hpp"
#include "coh/provenance.hpp"

namespace coh {

namespace {

using json = nlohmann::json;
constexpr double kPi = std::numbers::pi;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

double number(const json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
    return j.get<double>();
}

int integer(const json& j, const std::string& key) {
    if (!j.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    return j.get<int>();
}

std::optional<double> number_or_auto(const json& j, const std::string& key) {
    if (j.is_string() && j.get<std::string>() == "auto") return std::nullopt;
    return number(j, key);
}

std::pair<double, double> range(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("'" + key + "' must be [lo, hi]");
    const double lo = number(j[0], key), hi = number(j[1], key);
    if (!(hi > lo)) throw ConfigError("'" + key + "' is an empty range");
    return {lo, hi};
}

AngularFunction parse_channel(const json& j, double& swave_constant) {
    check_keys(j, {"type", "constant", "coeffs", "label"}, "channel");
    if (!j.contains("type") || !j["type"].is_string()) throw ConfigError("channel needs a 'type'");
    const auto type = j["type"].get<std::string>();
    if (type == "2p0-parallel") return build_2p0_parallel();
    if (type == "s-wave") {
        const double c = j.contains("constant") ? number(j["constant"], "constant") : default_swave_constant();
        swave_constant = c;
        try {
            return build_swave(c);
        } catch (const std::exception& ex) {
            throw ConfigError(ex.what());
        }
    }
    if (type == "legendre") {
        if (!j.contains("coeffs") || !j["coeffs"].is_array()) throw ConfigError("legendre channel needs 'coeffs'");
        std::vector<double> c;
        for (const auto& x : j["coeffs"]) c.push_back(number(x, "coeffs"));
        return from_coefficients(std::move(c), j.value("label", std::string("legendre")));
    }
    throw ConfigError("unknown channel type '" + type + "'");
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

std::string window_tag(double a, double b) {
    std::ostringstream os;
    os << a << "-" << b;
    return os.str();
}

// Value of a "# key value" or "key value" header line, if present.
std::optional<std::string> header_value(const std::string& text, const std::string& key) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::string l = line;
        const auto start = l.find_first_not_of("# ");
        l = start == std::string::npos ? std::string() : l.substr(start);
        if (l.rfind(key + " ", 0) == 0) return l.substr(key.size() + 1);
        if (line == "data" || line == "lines") break;
    }
    return std::nullopt;
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
    }
    check_keys(j,
               {"scaled_energy", "s_max", "s_max_over_2pi", "n_seeds", "tau", "sigma", "windows", "channels",
                "tolerances", "inversion", "search", "physical_channel", "initial_energy", "output_dir", "rng_seed",
                "threads", "synthetic"},
               "config");
    PipelineConfig c;
    if (j.contains("scaled_energy")) c.scaled_energy = number(j["scaled_energy"], "scaled_energy");
    if (!(c.scaled_energy < 0.0)) throw ConfigError("scaled_energy must be negative");
    if (j.contains("s_max") && j.contains("s_max_over_2pi")) throw ConfigError("give s_max or s_max_over_2pi, not both");
    if (j.contains("s_max")) c.s_max = number(j["s_max"], "s_max");
    if (j.contains("s_max_over_2pi")) c.s_max = 2.0 * kPi * number(j["s_max_over_2pi"], "s_max_over_2pi");
    if (!(c.s_max > 0.0)) throw ConfigError("s_max must be given and positive");
    if (j.contains("n_seeds")) c.n_seeds = integer(j["n_seeds"], "n_seeds");
    if (c.n_seeds < 2) throw ConfigError("n_seeds must be at least 2");
    if (j.contains("tau")) c.tau = number_or_auto(j["tau"], "tau");
    if (j.contains("sigma")) c.sigma = number_or_auto(j["sigma"], "sigma");
    if (j.contains("windows")) {
        if (!j["windows"].is_array()) throw ConfigError("'windows' must be a list");
        for (const auto& w : j["windows"]) c.windows.push_back(range(w, "windows"));
    }
    if (j.contains("channels")) {
        if (!j["channels"].is_array() || j["channels"].empty()) throw ConfigError("'channels' must be a nonempty list");
        for (const auto& ch : j["channels"]) c.channels.push_back(parse_channel(ch, c.swave_constant));
    } else {
        c.channels = {build_2p0_parallel(), build_swave()};
        c.swave_constant = default_swave_constant();
    }
    if (j.contains("tolerances")) {
        const auto& t = j["tolerances"];
        check_keys(t, {"svd_cutoff", "accept_im", "accept_err", "closure", "miss", "rtol", "atol", "energy"},
                   "tolerances");
        if (t.contains("svd_cutoff")) c.inversion.svd_cutoff = number(t["svd_cutoff"], "svd_cutoff");
        if (t.contains("accept_im")) c.inversion.accept_im = number(t["accept_im"], "accept_im");
        if (t.contains("accept_err")) c.inversion.accept_err = number(t["accept_err"], "accept_err");
        if (t.contains("closure")) c.search.closure_tolerance = number(t["closure"], "closure");
        if (t.contains("miss")) c.search.miss_tolerance = number(t["miss"], "miss");
        if (t.contains("rtol")) c.search.integration.step.rtol = number(t["rtol"], "rtol");
        if (t.contains("atol")) c.search.integration.step.atol = number(t["atol"], "atol");
        if (t.contains("energy")) c.search.integration.energy_tolerance = number(t["energy"], "energy");
    }
    if (j.contains("inversion")) {
        const auto& v = j["inversion"];
        check_keys(v, {"J", "M", "margin", "max_window_width", "overlap"}, "inversion");
        if (v.contains("J")) c.inversion.J = integer(v["J"], "J");
        if (v.contains("M")) c.inversion.M = integer(v["M"], "M");
        if (v.contains("margin")) c.inversion.margin = number(v["margin"], "margin");
        if (v.contains("max_window_width")) c.max_window_width = number(v["max_window_width"], "max_window_width");
        if (v.contains("overlap")) c.window_overlap = number(v["overlap"], "overlap");
    }
    if (j.contains("search")) {
        const auto& s = j["search"];
        check_keys(s, {"scan_refine_depth", "max_iterations", "miss_jump", "maslov"}, "search");
        if (s.contains("scan_refine_depth")) c.search.scan_refine_depth = integer(s["scan_refine_depth"], "scan_refine_depth");
        if (s.contains("max_iterations")) c.search.max_iterations = integer(s["max_iterations"], "max_iterations");
        if (s.contains("miss_jump")) c.search.miss_jump = number(s["miss_jump"], "miss_jump");
        if (s.contains("maslov")) {
            const auto& m = s["maslov"];
            if (m == "axis-crossings") c.search.maslov = MaslovRule::AxisCrossings;
            else if (m == "m12-zeros") c.search.maslov = MaslovRule::M12Zeros;
            else throw ConfigError("'maslov' must be \"axis-crossings\" or \"m12-zeros\"");
        }
    }
    if (j.contains("physical_channel")) {
        const int p = integer(j["physical_channel"], "physical_channel");
        if (p < 0 || static_cast<std::size_t>(p) >= c.channels.size()) throw ConfigError("physical_channel out of range");
        c.physical_channel = static_cast<std::size_t>(p);
    }
    if (j.contains("initial_energy")) c.initial_energy = number(j["initial_energy"], "initial_energy");
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) throw ConfigError("'output_dir' must be a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("rng_seed")) {
        if (!j["rng_seed"].is_number_unsigned()) throw ConfigError("'rng_seed' must be a nonnegative integer");
        c.rng_seed = j["rng_seed"].get<std::uint64_t>();
    }
    if (j.contains("threads")) c.threads = integer(j["threads"], "threads");
    c.search.threads = c.threads > 0 ? c.threads : default_threads();
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        check_keys(s, {"lines", "random"}, "synthetic");
        c.synthetic.enabled = true;
        int L = -1;
        if (s.contains("lines")) {
            for (const auto& l : s["lines"]) {
                check_keys(l, {"w", "b"}, "synthetic line");
                SpectralLine line;
                line.w = number(l.at("w"), "w");
                for (const auto& b : l.at("b")) line.b.push_back(number(b, "b"));
                if (L >= 0 && static_cast<int>(line.b.size()) != L) throw ConfigError("synthetic lines differ in channel count");
                L = static_cast<int>(line.b.size());
                c.synthetic.lines.push_back(std::move(line));
            }
        }
        if (s.contains("random")) {
            const auto& r = s["random"];
            check_keys(r, {"count", "w_range", "b_range", "channels", "min_separation"}, "synthetic.random");
            c.synthetic.random_count = integer(r.at("count"), "count");
            std::tie(c.synthetic.w_lo, c.synthetic.w_hi) = range(r.at("w_range"), "w_range");
            if (r.contains("b_range")) std::tie(c.synthetic.b_lo, c.synthetic.b_hi) = range(r["b_range"], "b_range");
            if (r.contains("channels")) c.synthetic.channels = integer(r["channels"], "channels");
            if (r.contains("min_separation")) c.synthetic.min_separation = number(r["min_separation"], "min_separation");
            if (L >= 0 && L != c.synthetic.channels) throw ConfigError("synthetic lines differ in channel count");
        }
        if (c.synthetic.lines.empty() && c.synthetic.random_count <= 0) throw ConfigError("synthetic spec has no lines");
    }
    for (const auto& [a, b] : c.windows)
        if (!(a > 0.0)) throw ConfigError("windows must lie at positive w");
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

double resolve_tau(const PipelineConfig& cfg) {
    if (cfg.tau) {
        if (!(*cfg.tau > 0.0)) throw ConfigError("tau must be positive");
        return *cfg.tau;
    }
    if (cfg.windows.empty()) return 0.05;
    double w_max = 0.0;
    for (const auto& w : cfg.windows) w_max = std::max(w_max, w.second);
    return default_tau(w_max);
}

double resolve_sigma(const PipelineConfig& cfg) { return cfg.sigma ? *cfg.sigma : default_sigma(resolve_tau(cfg)); }

std::filesystem::path OutputPaths::lines(double w_min, double w_max) const {
    return dir / ("lines_" + window_tag(w_min, w_max) + ".txt");
}

OutputPaths output_paths(const PipelineConfig& cfg) {
    OutputPaths p;
    p.dir = cfg.output_dir;
    p.orbits = p.dir / "orbits.txt";
    p.signal = p.dir / "signal.txt";
    p.sticks = p.dir / "sticks.txt";
    p.sticks_svg = p.dir / "sticks.svg";
    p.signal_plot = p.dir / "signal_re";
    p.signal_table = p.dir / "signal_re.txt";
    return p;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    const auto tmp = std::filesystem::path(p.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + p.string());
        out << content;
        if (!out) throw IoError("write failed for " + p.string());
    }
    std::filesystem::rename(tmp, p, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + p.string() + ": " + ec.message());
}

OrbitStage run_orbit_stage(const PipelineConfig& cfg) {
    OrbitStage st;
    st.report = find_closed_orbits(ScaledEnergy(cfg.scaled_energy), cfg.s_max, cfg.n_seeds, cfg.search);
    std::vector<std::string> header = {
        "tool_version " + std::string(kToolVersion),
        "scaled_energy " + fmt(cfg.scaled_energy),
        "s_max " + fmt(cfg.s_max),
        "n_seeds " + std::to_string(cfg.n_seeds),
        "primitives " + std::to_string(st.report.primitives.size()),
        "orbits " + std::to_string(st.report.orbits.size()),
        "rejected " + std::to_string(st.report.rejected.size()),
    };
    std::ostringstream os;
    write_orbit_table(os, st.report.orbits, header);
    st.table = os.str();
    return st;
}

SignalStage run_signal_stage(const PipelineConfig& cfg, const std::vector<ClosedOrbit>& orbits,
                             const std::string& orbit_table_hash) {
    SignalStage st;
    const double tau = resolve_tau(cfg), sigma = resolve_sigma(cfg);
    st.signal = build_signal(orbits, cfg.channels, sigma, tau, cfg.s_max, &st.build);
    st.signal.meta.scaled_energy = cfg.scaled_energy;
    st.signal.meta.orbit_table_hash = orbit_table_hash;
    st.signal.meta.swave_constant = cfg.swave_constant;
    st.signal.meta.tool_version = std::string(kToolVersion);
    std::ostringstream os;
    write_signal(os, st.signal);
    st.text = os.str();
    return st;
}

SpectralLineSet synthetic_lines(const PipelineConfig& cfg) {
    SpectralLineSet lines = cfg.synthetic.lines;
    const auto& s = cfg.synthetic;
    if (s.random_count > 0) {
        std::mt19937_64 rng(cfg.rng_seed);
        std::uniform_real_distribution<double> W(s.w_lo, s.w_hi), B(s.b_lo, s.b_hi), U(0.0, 1.0);
        SpectralLineSet random;
        long attempts = 0;
        while (static_cast<int>(random.size()) < s.random_count) {
            if (++attempts > 1000L * s.random_count) throw ConfigError("cannot place random lines with the requested separation");
            const double w = W(rng);
            bool ok = true;
            for (const auto& l : lines) ok = ok && std::abs(l.w.real() - w) >= s.min_separation;
            for (const auto& l : random) ok = ok && std::abs(l.w.real() - w) >= s.min_separation;
            SpectralLine line;
            line.w = w;
            for (int a = 0; a < s.channels; ++a) line.b.push_back(B(rng) * (U(rng) < 0.5 ? -1.0 : 1.0));
            if (ok) random.push_back(std::move(line));
        }
        lines.insert(lines.end(), random.begin(), random.end());
    }
    for (auto& l : lines) fix_gauge(l);
    std::sort(lines.begin(), lines.end(), [](const SpectralLine& a, const SpectralLine& b) {
        return a.w.real() < b.w.real();
    });
    return lines;
}

SignalStage run_synthetic_signal_stage(const PipelineConfig& cfg) {
    if (!cfg.synthetic.enabled) throw ConfigError("config has no synthetic section");
    SignalStage st;
    const double tau = resolve_tau(cfg);
    const auto lines = synthetic_lines(cfg);
    const auto n = static_cast<std::size_t>(std::floor(cfg.s_max / tau * (1.0 + 1e-14))) + 1;
    st.signal = synth_quantum_signal(lines, tau, n);
    st.signal.meta.scaled_energy = cfg.scaled_energy;
    st.signal.meta.tool_version = std::string(kToolVersion);
    std::ostringstream os;
    write_signal(os, st.signal);
    st.text = os.str();
    return st;
}

std::vector<WindowLines> run_inversion_stage(const PipelineConfig& cfg, const SampledSignal& signal,
                                             const std::string& signal_hash) {
    if (cfg.windows.empty()) throw ConfigError("no inversion windows configured");
    // All windows are checked before any work is done.
    for (const auto& [a, b] : cfg.windows) {
        const double edge = b + cfg.inversion.margin * std::min(b - a, cfg.max_window_width);
        if (edge * signal.tau >= kPi) {
            std::ostringstream os;
            os << "window [" << a << ", " << b << "] violates the Nyquist limit pi/tau = " << kPi / signal.tau;
            throw NyquistViolation(os.str());
        }
    }
    std::vector<WindowLines> out;
    for (const auto& [a, b] : cfg.windows) {
        WindowLines wl;
        wl.w_min = a;
        wl.w_max = b;
        wl.lines = invert_range(signal, a, b, cfg.inversion, cfg.max_window_width, cfg.window_overlap);
        LineSetMeta meta;
        meta.w_min = a;
        meta.w_max = b;
        meta.J = cfg.inversion.J;
        meta.M = cfg.inversion.M > 0 ? cfg.inversion.M : static_cast<int>((signal.size() - 2) / 2);
        meta.tau = signal.tau;
        meta.sigma = signal.sigma;
        meta.L = signal.L;
        meta.signal_hash = signal_hash;
        meta.tool_version = std::string(kToolVersion);
        std::ostringstream os;
        write_line_set(os, wl.lines, meta);
        wl.text = os.str();
        out.push_back(std::move(wl));
    }
    return out;
}

SpectrumStage run_spectrum_stage(const PipelineConfig& cfg, const std::vector<SpectralLineSet>& line_sets,
                                 const std::vector<std::string>& line_set_hashes) {
    SpectrumStage st;
    SpectralLineSet all;
    for (const auto& s : line_sets) all.insert(all.end(), s.begin(), s.end());
    for (const auto& l : all)
        if (cfg.physical_channel >= l.b.size()) throw ConfigError("physical_channel exceeds the line channel count");
    st.sticks = assemble_stick_spectrum(all, cfg.physical_channel);
    std::vector<std::string> header = {"tool_version " + std::string(kToolVersion),
                                       "channel " + std::to_string(cfg.physical_channel),
                                       "scaled_energy " + fmt(cfg.scaled_energy)};
    for (const auto& h : line_set_hashes) header.push_back("line_set_hash " + h);
    std::ostringstream os;
    write_sticks(os, st.sticks, header);
    st.text = os.str();
    std::ostringstream svg;
    write_stick_svg(svg, st.sticks, "stick spectrum", "strength");
    st.svg = svg.str();
    return st;
}

std::vector<std::string> verify_chain(const std::filesystem::path& dir) {
    std::vector<std::string> problems;
    const std::string version(kToolVersion);
    auto check_version = [&](const std::string& name, const std::string& text) {
        const auto v = header_value(text, "tool_version");
        if (!v) problems.push_back(name + ": no tool_version");
        else if (*v != version) problems.push_back(name + ": tool_version '" + *v + "' differs from '" + version + "'");
    };
    const auto orbits = dir / "orbits.txt", signal = dir / "signal.txt", sticks = dir / "sticks.txt";
    std::string signal_hash;
    if (std::filesystem::exists(signal)) {
        const auto text = read_file(signal);
        signal_hash = sha256_hex(text);
        check_version("signal.txt", text);
        const auto source = header_value(text, "source");
        if (source && *source == "closed-orbits") {
            if (!std::filesystem::exists(orbits)) {
                problems.push_back("signal.txt: orbit table missing");
            } else {
                const auto otext = read_file(orbits);
                check_version("orbits.txt", otext);
                const auto h = header_value(text, "orbit_table_hash");
                if (!h || *h != sha256_hex(otext)) problems.push_back("signal.txt: orbit table hash mismatch");
            }
        }
    } else {
        problems.push_back("signal.txt missing");
    }
    std::set<std::string> line_hashes;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("lines_", 0) != 0 || entry.path().extension() != ".txt") continue;
        const auto text = read_file(entry.path());
        line_hashes.insert(sha256_hex(text));
        check_version(name, text);
        const auto h = header_value(text, "signal_hash");
        if (!h || *h != signal_hash) problems.push_back(name + ": signal hash mismatch");
    }
    if (std::filesystem::exists(sticks)) {
        const auto text = read_file(sticks);
        check_version("sticks.txt", text);
        std::istringstream is(text);
        std::string line;
        std::set<std::string> named;
        while (std::getline(is, line))
            if (line.rfind("# line_set_hash ", 0) == 0) named.insert(line.substr(16));
        if (named != line_hashes) problems.push_back("sticks.txt: line-set hashes do not match the lines_*.txt files");
    }
    return problems;
}

}  // namespace coh
