// coh: closed-orbit cross-correlation pipeline.
//
//   coh orbits    --config c.json     closed-orbit table
//   coh signal    --config c.json     L x L recurrence signal (+ plots)
//   coh invert    --config c.json     line sets per window
//   coh spectrum  --config c.json     stick spectrum (+ SVG)
//   coh pipeline  --config c.json     all of the above
//   coh verify    DIR                 re-check the provenance chain
//   coh selftest                      synthetic-oracle checks
//
// Exit codes: 0 success, 1 usage/config, 2 numerical failure (or orbit
// search completed with rejections), 3 I/O.
#include <spdlog/spdlog.h>

#include <cmath>
#include <iomanip>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"

#include "coh/parallel.hpp"
#include "coh/pipeline.hpp"
#include "coh/provenance.hpp"

namespace fs = std::filesystem;
using namespace coh;

namespace {

// Malformed input files are I/O errors, not numerical ones.
template <class Parse>
auto parse_file(const fs::path& p, const std::string& text, Parse parse) {
    std::istringstream is(text);
    try {
        return parse(is);
    } catch (const std::runtime_error& e) {
        throw IoError(p.string() + ": " + e.what());
    }
}

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

struct Overrides {
    std::string config;
    std::string output_dir;
    double s_max_over_2pi = 0.0;
    int n_seeds = 0;
    int threads = -1;
    double tau = 0.0, sigma = 0.0;
};

PipelineConfig load(const Overrides& o) {
    auto cfg = load_config(o.config);
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (o.s_max_over_2pi > 0.0) cfg.s_max = 2.0 * std::numbers::pi * o.s_max_over_2pi;
    if (o.n_seeds > 0) cfg.n_seeds = o.n_seeds;
    if (o.threads >= 0) {
        cfg.threads = o.threads;
        cfg.search.threads = o.threads > 0 ? o.threads : default_threads();
    }
    if (o.tau > 0.0) cfg.tau = o.tau;
    if (o.sigma > 0.0) cfg.sigma = o.sigma;
    return cfg;
}

int do_orbits(const PipelineConfig& cfg, const fs::path& out) {
    spdlog::info("orbit search: scaled energy {}, s_max/2pi = {}, {} seeds", cfg.scaled_energy,
                 cfg.s_max / (2.0 * std::numbers::pi), cfg.n_seeds);
    auto st = run_orbit_stage(cfg);
    write_file_atomic(out, st.table);
    std::map<int, int> by_rep;
    double s_lo = INFINITY, s_hi = 0.0;
    for (const auto& o : st.report.orbits) {
        ++by_rep[o.repetition];
        s_lo = std::min(s_lo, o.s);
        s_hi = std::max(s_hi, o.s);
        spdlog::debug("orbit {} rep {} theta_i {:.12f} theta_f {:.12f} s {:.12f} m12 {:.6g} maslov {}", o.id,
                      o.repetition, o.theta_i, o.theta_f, o.s, o.m12, o.maslov);
    }
    spdlog::info("{} brackets, {} primitive orbits, {} with repetitions, action range [{:.6f}, {:.6f}]",
                 st.report.bracket_count, st.report.primitives.size(), st.report.orbits.size(), s_lo, s_hi);
    if (st.report.symmetry_completed > 0)
        spdlog::info("{} primitive orbits added as reflection or time-reversal images", st.report.symmetry_completed);
    for (const auto& [k, n] : by_rep) spdlog::info("  repetition {}: {}", k, n);
    spdlog::info("orbit table written to {}", out.string());
    if (!st.report.rejected.empty()) {
        std::ostringstream os;
        for (const auto& r : st.report.rejected) os << r << "\n";
        const fs::path rej = out.string() + ".rejected";
        write_file_atomic(rej, os.str());
        spdlog::warn("status: complete-with-rejections ({} candidates, see {})", st.report.rejected.size(),
                     rej.string());
        return kNumerical;
    }
    spdlog::info("status: complete");
    return kOk;
}

void write_signal_plots(const SampledSignal& sig, const OutputPaths& paths) {
    std::vector<double> x(sig.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = k * sig.tau / (2.0 * std::numbers::pi);
    std::ostringstream table;
    table << "# s/2pi";
    for (int a = 0; a < sig.L; ++a)
        for (int b = a; b < sig.L; ++b) table << " ReC" << a + 1 << b + 1;
    table << "\n" << std::setprecision(10);
    for (std::size_t k = 0; k < x.size(); ++k) {
        table << x[k];
        for (int a = 0; a < sig.L; ++a)
            for (int b = a; b < sig.L; ++b) table << " " << sig.at(k, a, b).real();
        table << "\n";
    }
    write_file_atomic(paths.signal_table, table.str());
    for (int a = 0; a < sig.L; ++a)
        for (int b = a; b < sig.L; ++b) {
            std::vector<double> y(sig.size());
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = sig.at(k, a, b).real();
            const std::string tag = std::to_string(a + 1) + std::to_string(b + 1);
            std::ostringstream svg;
            write_curve_svg(svg, x, y, "Re C" + tag + "(s)", "s/2pi", "Re C" + tag);
            write_file_atomic(paths.signal_plot.string() + "_C" + tag + ".svg", svg.str());
        }
}

int do_signal(const PipelineConfig& cfg, const fs::path& orbits_path, bool synthetic) {
    const auto paths = output_paths(cfg);
    SignalStage st;
    if (synthetic) {
        st = run_synthetic_signal_stage(cfg);
        spdlog::info("synthetic signal: {} lines, seed {}", synthetic_lines(cfg).size(), cfg.rng_seed);
    } else {
        const auto text = read_file(orbits_path);
        const auto orbits = parse_file(orbits_path, text, [](std::istream& is) { return read_orbit_table(is); });
        st = run_signal_stage(cfg, orbits, sha256_hex(text));
        for (const auto& l : st.build.log) spdlog::debug("{}", l);
        spdlog::info("signal from {} orbits ({} zero amplitude, {} focal)", st.build.used, st.build.skipped_zero,
                     st.build.skipped_focal);
    }
    spdlog::info("tau {}, sigma {}, {} samples, L = {}", st.signal.tau, st.signal.sigma, st.signal.size(),
                 st.signal.L);
    write_file_atomic(paths.signal, st.text);
    write_signal_plots(st.signal, paths);
    spdlog::info("signal written to {}", paths.signal.string());
    return kOk;
}

int do_invert(const PipelineConfig& cfg, const fs::path& signal_path) {
    const auto paths = output_paths(cfg);
    const auto text = read_file(signal_path);
    const auto sig = parse_file(signal_path, text, [](std::istream& is) { return read_signal(is); });
    const auto sets = run_inversion_stage(cfg, sig, sha256_hex(text));
    for (const auto& w : sets) {
        write_file_atomic(paths.lines(w.w_min, w.w_max), w.text);
        spdlog::info("window [{}, {}]: {} lines", w.w_min, w.w_max, w.lines.size());
        for (const auto& l : w.lines)
            spdlog::debug("  w = {:.9f} {:+.2e}i  err_w {:.2e}", l.w.real(), l.w.imag(), l.err_w);
    }
    return kOk;
}

int do_spectrum(const PipelineConfig& cfg, std::vector<std::string> files) {
    const auto paths = output_paths(cfg);
    if (files.empty())
        for (const auto& [a, b] : cfg.windows) files.push_back(paths.lines(a, b).string());
    std::vector<SpectralLineSet> sets;
    std::vector<std::string> hashes;
    for (const auto& f : files) {
        const auto text = read_file(f);
        sets.push_back(parse_file(f, text, [](std::istream& is) { return read_line_set(is); }));
        hashes.push_back(sha256_hex(text));
    }
    const auto st = run_spectrum_stage(cfg, sets, hashes);
    write_file_atomic(paths.sticks, st.text);
    write_file_atomic(paths.sticks_svg, st.svg);
    spdlog::info("{} sticks written to {}", st.sticks.size(), paths.sticks.string());
    for (const auto& s : st.sticks)
        spdlog::info("  w = {:.6f}  strength = {:.6g}  (+- {:.2g})  B = {:.4f} T", s.w, s.strength, s.error,
                     field_of_w(s.w));
    return kOk;
}

int do_verify(const fs::path& dir) {
    const auto problems = verify_chain(dir);
    for (const auto& p : problems) spdlog::error("verify: {}", p);
    if (problems.empty()) spdlog::info("verify: provenance chain in {} is consistent", dir.string());
    return problems.empty() ? kOk : kIo;
}

int do_pipeline(const PipelineConfig& cfg, bool verify) {
    const auto paths = output_paths(cfg);
    int status = kOk;
    if (cfg.synthetic.enabled) {
        do_signal(cfg, {}, true);
    } else {
        status = do_orbits(cfg, paths.orbits);
        do_signal(cfg, paths.orbits, false);
    }
    do_invert(cfg, paths.signal);
    do_spectrum(cfg, {});
    if (verify && do_verify(paths.dir) != kOk) return kIo;
    return status;
}

// Synthetic-oracle checks: a 50-line 2 x 2 signal must be inverted to
// 1e-8 in w and 1e-6 in the amplitude products, and the signal file must
// round-trip exactly.
int do_selftest() {
    PipelineConfig cfg;
    cfg.s_max = 2.0 * std::numbers::pi * 30.0;
    cfg.tau = 0.05;
    cfg.windows = {{16.0, 21.0}};
    cfg.synthetic.enabled = true;
    cfg.synthetic.random_count = 50;
    cfg.synthetic.w_lo = 16.0;
    cfg.synthetic.w_hi = 21.0;
    cfg.synthetic.min_separation = 2.0 * std::numbers::pi / (cfg.s_max / 2.0 * 4.0);
    cfg.rng_seed = 7;
    const auto truth = synthetic_lines(cfg);
    const auto st = run_synthetic_signal_stage(cfg);
    bool ok = true;
    std::istringstream is(st.text);
    const auto back = read_signal(is);
    const bool roundtrip = back.data == st.signal.data && back.tau == st.signal.tau;
    spdlog::info("selftest: signal file round trip {}", roundtrip ? "exact" : "FAILED");
    ok = ok && roundtrip;
    const auto sets = run_inversion_stage(cfg, st.signal, sha256_hex(st.text));
    const auto& found = sets.front().lines;
    double dw = 0.0, dd = 0.0;
    for (const auto& t : truth) {
        const SpectralLine* best = nullptr;
        for (const auto& l : found)
            if (!best || std::abs(l.w - t.w) < std::abs(best->w - t.w)) best = &l;
        if (!best) {
            dw = INFINITY;
            break;
        }
        dw = std::max(dw, std::abs(best->w - t.w));
        for (std::size_t a = 0; a < t.b.size(); ++a)
            for (std::size_t c = 0; c < t.b.size(); ++c)
                dd = std::max(dd, std::abs(best->product(a, c) - t.product(a, c)) / std::abs(t.product(a, c)));
    }
    const bool inv = found.size() == truth.size() && dw <= 1e-8 && dd <= 1e-6;
    spdlog::info("selftest: {} of {} lines, max |dw| = {:.2e}, max product error = {:.2e}: {}", found.size(),
                 truth.size(), dw, dd, inv ? "ok" : "FAILED");
    ok = ok && inv;
    return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-orbit cross-correlation pipeline: orbits, recurrence signals, harmonic inversion"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();
    app.set_version_flag("--version", std::string(kToolVersion));

    Overrides ov;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", ov.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output-dir", ov.output_dir, "override output_dir");
        sub->add_option("--s-max-over-2pi", ov.s_max_over_2pi, "override the action cutoff (units of 2 pi)");
        sub->add_option("--n-seeds", ov.n_seeds, "override the number of launch angles");
        sub->add_option("--threads", ov.threads, "worker threads (0: all)");
        sub->add_option("--tau", ov.tau, "override tau");
        sub->add_option("--sigma", ov.sigma, "override sigma");
    };

    auto* orbits = app.add_subcommand("orbits", "closed-orbit search");
    add_common(orbits);
    std::string orbits_out;
    orbits->add_option("--out", orbits_out, "orbit table path (default OUTPUT_DIR/orbits.txt)");

    auto* signal = app.add_subcommand("signal", "build the recurrence signal");
    add_common(signal);
    std::string orbits_in;
    bool synthetic = false;
    signal->add_option("--orbits", orbits_in, "orbit table (default OUTPUT_DIR/orbits.txt)");
    signal->add_flag("--synthetic", synthetic, "use the synthetic section of the config instead of orbits");

    auto* invert = app.add_subcommand("invert", "harmonic inversion of the signal");
    add_common(invert);
    std::string signal_in;
    invert->add_option("--signal", signal_in, "signal file (default OUTPUT_DIR/signal.txt)");

    auto* spectrum = app.add_subcommand("spectrum", "stick spectrum from line sets");
    add_common(spectrum);
    std::vector<std::string> line_files;
    spectrum->add_option("--lines", line_files, "line-set files (default: one per configured window)");

    auto* pipeline = app.add_subcommand("pipeline", "run all stages");
    add_common(pipeline);
    bool verify_after = false;
    pipeline->add_flag("--verify", verify_after, "re-check the provenance chain afterwards");

    auto* verify = app.add_subcommand("verify", "re-check hashes and tool versions of an output directory");
    std::string verify_dir;
    verify->add_option("dir", verify_dir, "output directory")->required()->check(CLI::ExistingDirectory);

    app.add_subcommand("selftest", "synthetic-oracle inversion checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::set_pattern("%^[%l]%$ %v");

    try {
        if (app.got_subcommand("selftest")) return do_selftest();
        if (app.got_subcommand("verify")) return do_verify(verify_dir);
        const auto cfg = load(ov);
        const auto paths = output_paths(cfg);
        if (app.got_subcommand("orbits")) return do_orbits(cfg, orbits_out.empty() ? paths.orbits : fs::path(orbits_out));
        if (app.got_subcommand("signal"))
            return do_signal(cfg, orbits_in.empty() ? paths.orbits : fs::path(orbits_in), synthetic);
        if (app.got_subcommand("invert")) return do_invert(cfg, signal_in.empty() ? paths.signal : fs::path(signal_in));
        if (app.got_subcommand("spectrum")) return do_spectrum(cfg, line_files);
        if (app.got_subcommand("pipeline")) return do_pipeline(cfg, verify_after);
    } catch (const ConfigError& e) {
        spdlog::error("configuration: {}", e.what());
        return kUsage;
    } catch (const NyquistViolation& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const IoError& e) {
        spdlog::error("I/O: {}", e.what());
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("I/O: {}", e.what());
        return kIo;
    } catch (const std::exception& e) {
        spdlog::error("numerical failure: {}", e.what());
        return kNumerical;
    }
    return kUsage;
}
