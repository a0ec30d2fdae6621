#include "coh/orbit_search.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "coh/parallel.hpp"

namespace coh {

namespace {

constexpr double kPi = std::numbers::pi;

// Trajectory launched at theta, integrated (without monodromy) a little past
// s_target; returns the pass whose action is closest to s_target.
std::optional<PassSample> track_pass(double theta, double s_target, double window, ScaledEnergy e,
                                     const SearchOptions& opt) {
    IntegrationOptions io = opt.integration;
    io.monodromy = false;
    TrajectoryRecord rec;
    try {
        rec = integrate(launch_from_nucleus(theta, e), e, s_target + window, {}, io);
    } catch (const IntegrationFailure&) {
        return std::nullopt;
    }
    const ClosestApproach* best = nullptr;
    for (const auto& p : rec.passes)
        if (!best || std::abs(p.state.s - s_target) < std::abs(best->state.s - s_target)) best = &p;
    if (!best || std::abs(best->state.s - s_target) > 0.5 * window) return std::nullopt;
    return PassSample{best->index, best->state.s, best->miss, best->distance};
}

struct RootOutcome {
    bool ok = false;
    double theta = 0.0;
    PassSample pass;
    std::string diagnostic;
};

// Bracketed Illinois iteration on the miss function of a tracked pass.
RootOutcome solve_miss(double lo, double hi, PassSample plo, PassSample phi, ScaledEnergy e,
                       const SearchOptions& opt) {
    RootOutcome out;
    double flo = plo.miss, fhi = phi.miss;
    if (flo == 0.0) return {true, lo, plo, {}};
    if (fhi == 0.0) return {true, hi, phi, {}};
    if ((flo < 0.0) == (fhi < 0.0)) return {false, lo, plo, "no sign change"};
    int side = 0;
    PassSample best = std::abs(flo) < std::abs(fhi) ? plo : phi;
    double best_theta = std::abs(flo) < std::abs(fhi) ? lo : hi;
    for (int it = 0; it < opt.max_iterations; ++it) {
        double theta = (flo * hi - fhi * lo) / (flo - fhi);
        if (!(theta > lo && theta < hi)) theta = 0.5 * (lo + hi);
        if (theta == lo || theta == hi) break;
        // Continuation target: action interpolated across the bracket.
        const double w = (theta - lo) / (hi - lo);
        const double s_target = (1.0 - w) * plo.s + w * phi.s;
        const double window = std::max(1.0, 4.0 * std::abs(phi.s - plo.s));
        const auto p = track_pass(theta, s_target, window, e, opt);
        if (!p) return {false, theta, best, "bracket lost: pass disappeared"};
        if (std::abs(p->miss) < std::abs(best.miss)) {
            best = *p;
            best_theta = theta;
        }
        if (std::abs(p->miss) <= opt.miss_tolerance) return {true, theta, *p, {}};
        if ((p->miss < 0.0) == (fhi < 0.0)) {
            hi = theta;
            fhi = p->miss;
            phi = *p;
            if (side == -1) flo *= 0.5;
            side = -1;
        } else {
            lo = theta;
            flo = p->miss;
            plo = *p;
            if (side == 1) fhi *= 0.5;
            side = 1;
        }
        if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(hi))) break;
    }
    out.ok = best.distance <= opt.closure_tolerance;
    out.theta = best_theta;
    out.pass = best;
    if (!out.ok) {
        std::ostringstream os;
        os << "no convergence: |miss| = " << std::abs(best.miss) << ", distance = " << best.distance;
        out.diagnostic = os.str();
    }
    return out;
}

// Full integration with monodromy up to the given pass; fills the orbit.
RefineResult evaluate_orbit(double theta, int pass_index, ScaledEnergy e, const SearchOptions& opt) {
    RefineResult r;
    IntegrationOptions io = opt.integration;
    io.monodromy = true;
    TrajectoryRecord rec;
    try {
        rec = integrate(launch_from_nucleus(theta, e), e, std::numeric_limits<double>::infinity(),
                        {true, pass_index}, io);
    } catch (const IntegrationFailure& ex) {
        r.diagnostic = std::string("integration failure: ") + ex.what();
        return r;
    }
    if (rec.passes.size() < static_cast<std::size_t>(pass_index)) {
        r.diagnostic = "pass not reached";
        return r;
    }
    const auto& p = rec.passes[pass_index - 1];
    r.pass_index = pass_index;
    r.orbit.theta_i = theta;
    r.orbit.theta_f = return_angle(p.state.p_mu, p.state.p_nu);
    r.orbit.s = p.state.s;
    r.orbit.m12 = p.monodromy(0, 1);
    r.orbit.maslov = maslov_index(rec, pass_index, opt.maslov);
    r.orbit.closure_residual = p.distance;
    for (int i = 0; i + 1 < pass_index; ++i)
        if (rec.passes[i].distance < opt.return_distance) ++r.returns_before;
    if (!rec.ambiguous_caustics.empty()) {
        r.diagnostic = "m12 zero coincides with the return; Maslov index needs manual resolution";
        return r;
    }
    if (p.distance > opt.closure_tolerance) {
        std::ostringstream os;
        os << "closure residual " << p.distance << " exceeds tolerance";
        r.diagnostic = os.str();
        return r;
    }
    r.ok = true;
    return r;
}

bool same_orbit(const ClosedOrbit& a, const ClosedOrbit& b) {
    return std::abs(a.s - b.s) <= 1e-8 * std::max(a.s, b.s) && std::abs(a.theta_i - b.theta_i) <= 1e-8;
}

void sort_orbits(std::vector<ClosedOrbit>& v) {
    std::sort(v.begin(), v.end(), [](const ClosedOrbit& a, const ClosedOrbit& b) {
        if (a.s != b.s) return a.s < b.s;
        return a.theta_i < b.theta_i;
    });
}

}  // namespace

namespace {

// Time reversal maps (theta_i, theta_f) to (theta_f, theta_i) and the
// z-reflection maps theta to pi - theta; s, m12 and the Maslov index are
// unchanged under both. Near accumulation points the scan can resolve an
// orbit but not all of its images, and closing them directly stalls at
// |miss| ~ 1e-9 once |m12| exceeds ~1e5. Missing images are added from
// the symmetry instead.
std::size_t complete_partners(std::vector<ClosedOrbit>& orbits) {
    auto present = [&](double s, double theta_i) {
        return std::any_of(orbits.begin(), orbits.end(), [&](const ClosedOrbit& o) {
            return std::abs(o.s - s) <= 1e-8 * s && std::abs(o.theta_i - theta_i) <= 1e-7;
        });
    };
    const std::size_t n = orbits.size();
    for (std::size_t k = 0; k < n; ++k) {
        const ClosedOrbit o = orbits[k];
        const double images[3][2] = {{o.theta_f, o.theta_i}, {kPi - o.theta_i, kPi - o.theta_f},
                                     {kPi - o.theta_f, kPi - o.theta_i}};
        for (const auto& im : images) {
            if (present(o.s, im[0])) continue;
            ClosedOrbit p = o;
            p.theta_i = im[0];
            p.theta_f = im[1];
            orbits.push_back(p);
        }
    }
    sort_orbits(orbits);
    return orbits.size() - n;
}

// Same for repetitions whose own refinement failed: the image of the k-th
// repetition is the k-th repetition of the primitive's image.
void complete_repetition_partners(std::vector<ClosedOrbit>& orbits) {
    auto find = [&](double s, double theta_i) -> const ClosedOrbit* {
        for (const auto& o : orbits)
            if (std::abs(o.s - s) <= 1e-8 * s && std::abs(o.theta_i - theta_i) <= 1e-7) return &o;
        return nullptr;
    };
    const std::size_t n = orbits.size();
    for (std::size_t k = 0; k < n; ++k) {
        const ClosedOrbit o = orbits[k];
        if (o.repetition == 1) continue;
        const ClosedOrbit prim = orbits[o.primitive_id - 1];
        const double images[3][2] = {{o.theta_f, o.theta_i}, {kPi - o.theta_i, kPi - o.theta_f},
                                     {kPi - o.theta_f, kPi - o.theta_i}};
        const double prim_images[3] = {prim.theta_f, kPi - prim.theta_i, kPi - prim.theta_f};
        for (int m = 0; m < 3; ++m) {
            if (find(o.s, images[m][0])) continue;
            const auto* pi = find(prim.s, prim_images[m]);
            if (!pi || pi->repetition != 1) continue;
            ClosedOrbit p = o;
            p.theta_i = images[m][0];
            p.theta_f = images[m][1];
            p.primitive_id = pi->id;
            orbits.push_back(p);
        }
    }
    if (orbits.size() == n) return;
    for (auto& o : orbits)
        if (o.repetition == 1) o.primitive_id = o.id;
    sort_orbits(orbits);
    std::vector<int> remap(orbits.size() + 1, 0);
    for (std::size_t i = 0; i < orbits.size(); ++i)
        if (orbits[i].repetition == 1) remap[orbits[i].id] = static_cast<int>(i) + 1;
    for (std::size_t i = 0; i < orbits.size(); ++i) {
        orbits[i].primitive_id = remap[orbits[i].primitive_id];
        orbits[i].id = static_cast<int>(i) + 1;
    }
}

}  // namespace

std::vector<double> seed_angles(int n_seeds) {
    if (n_seeds < 2) throw std::invalid_argument("n_seeds must be at least 2");
    std::vector<double> t(n_seeds);
    for (int k = 0; k < n_seeds; ++k) t[k] = kPi * (k + 0.5) / n_seeds;
    return t;
}

std::vector<Bracket> match_brackets(const SeedScan& a, const SeedScan& b) {
    std::vector<Bracket> out;
    if (!a.ok || !b.ok) return out;
    auto gap = [](const std::vector<PassSample>& v, std::size_t i) {
        double g = std::numeric_limits<double>::infinity();
        if (i > 0) g = std::min(g, v[i].s - v[i - 1].s);
        if (i + 1 < v.size()) g = std::min(g, v[i + 1].s - v[i].s);
        return g;
    };
    std::size_t i = 0, j = 0;
    while (i < a.passes.size() && j < b.passes.size()) {
        const auto& pa = a.passes[i];
        const auto& pb = b.passes[j];
        const double d = pa.s - pb.s;
        const double tol = 0.25 * std::min(gap(a.passes, i), gap(b.passes, j));
        if (std::abs(d) <= tol) {
            if ((pa.miss < 0.0) != (pb.miss < 0.0) || pa.miss == 0.0 || pb.miss == 0.0)
                out.push_back({a.theta, b.theta, pa.miss, pb.miss, pa.index, pb.index, pa.s, pb.s});
            ++i;
            ++j;
        } else if (d < 0.0) {
            ++i;
        } else {
            ++j;
        }
    }
    return out;
}

namespace {

SeedScan scan_seed(double theta, ScaledEnergy e, double s_max, const IntegrationOptions& io) {
    SeedScan seed;
    seed.theta = theta;
    try {
        const auto rec = integrate(launch_from_nucleus(theta, e), e, s_max, {}, io);
        seed.passes.reserve(rec.passes.size());
        for (const auto& p : rec.passes) seed.passes.push_back({p.index, p.state.s, p.miss, p.distance});
    } catch (const IntegrationFailure&) {
        seed.ok = false;
    }
    return seed;
}

// True if the passes of two neighbouring seeds do not continue into each
// other (a pass appears or vanishes) or a matched miss value jumps.
bool needs_subdivision(const SeedScan& a, const SeedScan& b, double s_max, const SearchOptions& opt) {
    if (a.ok != b.ok) return true;
    const double edge = s_max - 1.0;  // passes this close to the cutoff may lack a partner
    auto gap = [](const std::vector<PassSample>& v, std::size_t i) {
        double g = std::numeric_limits<double>::infinity();
        if (i > 0) g = std::min(g, v[i].s - v[i - 1].s);
        if (i + 1 < v.size()) g = std::min(g, v[i + 1].s - v[i].s);
        return g;
    };
    std::size_t i = 0, j = 0;
    while (i < a.passes.size() && j < b.passes.size()) {
        const auto& pa = a.passes[i];
        const auto& pb = b.passes[j];
        const double d = pa.s - pb.s;
        if (std::abs(d) <= 0.25 * std::min(gap(a.passes, i), gap(b.passes, j))) {
            if (std::abs(pa.miss - pb.miss) > opt.miss_jump) return true;
            ++i;
            ++j;
        } else if (d < 0.0) {
            if (pa.s < edge) return true;
            ++i;
        } else {
            if (pb.s < edge) return true;
            ++j;
        }
    }
    for (; i < a.passes.size(); ++i)
        if (a.passes[i].s < edge) return true;
    for (; j < b.passes.size(); ++j)
        if (b.passes[j].s < edge) return true;
    return false;
}

}  // namespace

ScanResult scan_launch_angles(ScaledEnergy e, double s_max, int n_seeds, const SearchOptions& opt) {
    const auto angles = seed_angles(n_seeds);
    ScanResult res;
    res.seeds.resize(angles.size());
    IntegrationOptions io = opt.integration;
    io.monodromy = false;
    parallel_for(angles.size(), opt.threads,
                 [&](std::size_t k) { res.seeds[k] = scan_seed(angles[k], e, s_max, io); });

    // Bisect intervals where the pass structure is not resolved by the seeds
    // (accumulation points of closed orbits, grazing passes).
    const double min_width = (kPi / n_seeds) * std::ldexp(1.0, -opt.scan_refine_depth);
    for (;;) {
        std::vector<double> mids;
        for (std::size_t k = 0; k + 1 < res.seeds.size(); ++k) {
            const auto& a = res.seeds[k];
            const auto& b = res.seeds[k + 1];
            if (b.theta - a.theta > 1.5 * min_width && needs_subdivision(a, b, s_max, opt))
                mids.push_back(0.5 * (a.theta + b.theta));
        }
        if (mids.empty()) break;
        std::vector<SeedScan> added(mids.size());
        parallel_for(mids.size(), opt.threads, [&](std::size_t k) { added[k] = scan_seed(mids[k], e, s_max, io); });
        std::vector<SeedScan> merged;
        merged.reserve(res.seeds.size() + added.size());
        std::merge(std::make_move_iterator(res.seeds.begin()), std::make_move_iterator(res.seeds.end()),
                   std::make_move_iterator(added.begin()), std::make_move_iterator(added.end()),
                   std::back_inserter(merged), [](const SeedScan& x, const SeedScan& y) { return x.theta < y.theta; });
        res.seeds = std::move(merged);
    }

    for (std::size_t k = 0; k + 1 < res.seeds.size(); ++k) {
        auto b = match_brackets(res.seeds[k], res.seeds[k + 1]);
        res.brackets.insert(res.brackets.end(), b.begin(), b.end());
    }
    return res;
}

int maslov_index(const TrajectoryRecord& trajectory, int pass_index, MaslovRule rule) {
    if (pass_index < 1 || static_cast<std::size_t>(pass_index) > trajectory.passes.size())
        throw std::out_of_range("pass index not on trajectory");
    const auto& p = trajectory.passes[pass_index - 1];
    if (rule == MaslovRule::M12Zeros) return p.caustics;
    return p.caustics + p.axis_crossings + 2;
}

RefineResult refine_closed_orbit(const Bracket& bracket, ScaledEnergy e, const SearchOptions& opt) {
    PassSample lo{bracket.pass_lo, bracket.s_lo, bracket.miss_lo, 0.0};
    PassSample hi{bracket.pass_hi, bracket.s_hi, bracket.miss_hi, std::numeric_limits<double>::infinity()};
    lo.distance = std::numeric_limits<double>::infinity();
    const auto root = solve_miss(bracket.theta_lo, bracket.theta_hi, lo, hi, e, opt);
    if (!root.ok) {
        RefineResult r;
        r.diagnostic = root.diagnostic;
        r.orbit.theta_i = root.theta;
        return r;
    }
    return evaluate_orbit(root.theta, root.pass.index, e, opt);
}

RefineResult close_at_return(double theta_i, int k, double s_hint, ScaledEnergy e, const SearchOptions& opt) {
    const double window = 2.0;
    auto p0 = track_pass(theta_i, s_hint, window, e, opt);
    RefineResult fail;
    if (!p0) {
        fail.diagnostic = "return not found near expected action";
        return fail;
    }
    double theta = theta_i;
    PassSample pass = *p0;
    if (pass.distance > opt.closure_tolerance && theta_i > 0.0 && theta_i < kPi) {
        // Widen a small bracket around the primitive's launch angle.
        double delta = 1e-12;
        std::optional<PassSample> plo, phi;
        double lo = theta, hi = theta;
        for (int it = 0; it < 40; ++it, delta *= 4.0) {
            lo = std::max(theta_i - delta, 0.0);
            hi = std::min(theta_i + delta, kPi);
            plo = track_pass(lo, pass.s, window, e, opt);
            phi = track_pass(hi, pass.s, window, e, opt);
            if (plo && phi && (plo->miss < 0.0) != (phi->miss < 0.0)) break;
            plo.reset();
        }
        if (!plo || !phi) {
            fail.diagnostic = "could not bracket repetition";
            return fail;
        }
        const auto root = solve_miss(lo, hi, *plo, *phi, e, opt);
        if (!root.ok) {
            fail.diagnostic = root.diagnostic;
            return fail;
        }
        theta = root.theta;
        pass = root.pass;
    }
    auto r = evaluate_orbit(theta, pass.index, e, opt);
    if (r.ok && r.returns_before != k - 1) {
        r.ok = false;
        r.diagnostic = "unexpected number of intermediate returns";
    }
    return r;
}

ExtendResult extend_repetitions(const std::vector<ClosedOrbit>& primitives, double s_max, ScaledEnergy e,
                                const SearchOptions& opt) {
    struct Job {
        std::size_t prim;
        int k;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < primitives.size(); ++i)
        for (int k = 2; k * primitives[i].s <= s_max; ++k) jobs.push_back({i, k});
    std::vector<RefineResult> results(jobs.size());
    parallel_for(jobs.size(), opt.threads, [&](std::size_t j) {
        const auto& p = primitives[jobs[j].prim];
        results[j] = close_at_return(p.theta_i, jobs[j].k, jobs[j].k * p.s, e, opt);
    });

    ExtendResult out;
    out.orbits = primitives;
    for (auto& o : out.orbits) o.repetition = 1;
    sort_orbits(out.orbits);
    for (std::size_t i = 0; i < out.orbits.size(); ++i) out.orbits[i].id = static_cast<int>(i) + 1;
    // Map primitive launch data to their provisional ids.
    std::vector<ClosedOrbit> reps;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const auto& p = primitives[jobs[j].prim];
        auto it = std::find_if(out.orbits.begin(), out.orbits.end(),
                               [&](const ClosedOrbit& o) { return same_orbit(o, p); });
        if (!results[j].ok) {
            std::ostringstream os;
            os << "repetition " << jobs[j].k << " of orbit at theta_i=" << std::setprecision(17) << p.theta_i
               << " s=" << p.s << ": " << results[j].diagnostic;
            out.diagnostics.push_back(os.str());
            continue;
        }
        ClosedOrbit o = results[j].orbit;
        o.repetition = jobs[j].k;
        o.primitive_id = it->id;
        reps.push_back(o);
    }
    out.orbits.insert(out.orbits.end(), reps.begin(), reps.end());
    // Final ids follow the action ordering; primitive_id is remapped.
    for (auto& o : out.orbits)
        if (o.repetition == 1) o.primitive_id = o.id;
    sort_orbits(out.orbits);
    std::vector<int> remap(out.orbits.size() + 1, 0);
    for (std::size_t i = 0; i < out.orbits.size(); ++i) {
        if (out.orbits[i].repetition == 1) remap[out.orbits[i].id] = static_cast<int>(i) + 1;
    }
    for (std::size_t i = 0; i < out.orbits.size(); ++i) {
        out.orbits[i].primitive_id = remap[out.orbits[i].primitive_id];
        out.orbits[i].id = static_cast<int>(i) + 1;
    }
    return out;
}

SearchReport find_closed_orbits(ScaledEnergy e, double s_max, int n_seeds, const SearchOptions& opt) {
    SearchReport report;
    const auto scan = scan_launch_angles(e, s_max, n_seeds, opt);
    report.bracket_count = scan.brackets.size();
    std::vector<RefineResult> refined(scan.brackets.size());
    parallel_for(scan.brackets.size(), opt.threads,
                 [&](std::size_t i) { refined[i] = refine_closed_orbit(scan.brackets[i], e, opt); });

    std::vector<ClosedOrbit> prims;
    for (std::size_t i = 0; i < refined.size(); ++i) {
        const auto& r = refined[i];
        if (!r.ok) {
            std::ostringstream os;
            os << "bracket [" << std::setprecision(17) << scan.brackets[i].theta_lo << ", "
               << scan.brackets[i].theta_hi << "] pass " << scan.brackets[i].pass_lo << ": " << r.diagnostic;
            report.rejected.push_back(os.str());
            continue;
        }
        if (r.returns_before > 0) continue;  // a repetition, rebuilt below
        if (r.orbit.s > s_max) continue;
        prims.push_back(r.orbit);
    }

    // Orbits along the field axis: every pass of the axial trajectory closes.
    for (double theta : {0.0, kPi}) {
        auto r = evaluate_orbit(theta, 1, e, opt);
        if (r.ok && r.orbit.s <= s_max) prims.push_back(r.orbit);
    }

    sort_orbits(prims);
    std::vector<ClosedOrbit> unique;
    for (const auto& o : prims) {
        auto dup = std::find_if(unique.begin(), unique.end(), [&](const ClosedOrbit& u) { return same_orbit(u, o); });
        if (dup == unique.end()) {
            unique.push_back(o);
        } else if (o.closure_residual < dup->closure_residual) {
            *dup = o;
        }
    }
    report.symmetry_completed = complete_partners(unique);
    auto ext = extend_repetitions(unique, s_max, e, opt);
    report.orbits = std::move(ext.orbits);
    complete_repetition_partners(report.orbits);
    report.rejected.insert(report.rejected.end(), ext.diagnostics.begin(), ext.diagnostics.end());
    for (const auto& o : report.orbits)
        if (o.repetition == 1) report.primitives.push_back(o);
    return report;
}

void write_orbit_table(std::ostream& os, const std::vector<ClosedOrbit>& orbits, const std::vector<std::string>& header) {
    for (const auto& h : header) os << "# " << h << '\n';
    os << "# id primitive_id repetition theta_i theta_f s m12 maslov closure_residual\n";
    os << std::setprecision(17);
    for (const auto& o : orbits) {
        os << o.id << ' ' << o.primitive_id << ' ' << o.repetition << ' ' << o.theta_i << ' ' << o.theta_f << ' '
           << o.s << ' ' << o.m12 << ' ' << o.maslov << ' ' << o.closure_residual << '\n';
    }
}

std::vector<ClosedOrbit> read_orbit_table(std::istream& is) {
    std::vector<ClosedOrbit> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ClosedOrbit o;
        if (!(ls >> o.id >> o.primitive_id >> o.repetition >> o.theta_i >> o.theta_f >> o.s >> o.m12 >> o.maslov >>
              o.closure_residual))
            throw std::runtime_error("orbit table: malformed record at line " + std::to_string(lineno));
        out.push_back(o);
    }
    return out;
}

}  // namespace coh
