// Acceptance suite: one line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion ids...]; no arguments runs all of them.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "sweepsim/asg.hpp"
#include "sweepsim/epidemics.hpp"
#include "sweepsim/experiment.hpp"
#include "sweepsim/forward.hpp"
#include "sweepsim/lm.hpp"
#include "sweepsim/replicates.hpp"
#include "sweepsim/stats.hpp"

using namespace sweepsim;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> lines;

    void check(bool ok, const std::string& line) {
        pass = pass && ok;
        lines.push_back(std::string(ok ? "ok   " : "FAIL ") + line);
    }
    void note(const std::string& line) { lines.push_back("     " + line); }
};

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

Eigen::MatrixXd mat(int d, std::initializer_list<double> v) {
    Eigen::MatrixXd m(d, d);
    auto it = v.begin();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = *it++;
    return m;
}

MigrationStructure pair_asym() { return build_migration(2, mat(2, {0, 3, 0.5, 0})); }
MigrationStructure triple_asym() { return build_migration(3, mat(3, {0, 2, 0.5, 1, 0, 3, 0.25, 0.75, 0})); }
MigrationStructure triple_cycle() { return build_migration(3, mat(3, {0, 1, 0, 0, 0, 2, 4, 0, 0})); }

double median_deviation(const std::vector<double>& v, double target) {
    return std::abs(median(v) - target) / target;
}

std::vector<double> scaled_hitting_times(const MigrationStructure& ms, const SweepParams& sp, std::uint64_t reps,
                                         std::uint64_t seed, LMOptions opts = {}) {
    return run_replicates(seed, reps, threads(), [&](RngStream& rng, std::uint64_t) {
        return lm_hitting_time(ms, sp, rng, opts).scaled;
    });
}

// 1. Moran fixation probability against the closed form.
Outcome fixation_probability() {
    Outcome o;
    struct Setting {
        MigrationStructure ms;
        double alpha, mu;
        Vector x;
    };
    const std::vector<Setting> settings = {
        {MigrationStructure::single_colony(), 2.0, 0.0, {0.1}},
        {pair_asym(), 2.0, 1.0, {0.3, 0.05}},
        {pair_asym(), 5.0, 0.5, {0.0, 0.02}},
        {triple_asym(), 2.0, 1.0, {0.2, 0.0, 0.0}},
        {triple_asym(), 5.0, 2.0, {0.0, 0.0, 0.05}},
    };
    const std::int64_t N = 1000;
    const std::uint64_t reps = 10000;
    for (std::size_t s = 0; s < settings.size(); ++s) {
        const auto& st = settings[s];
        const SweepParams sp{st.alpha, st.mu, 0};
        const auto init = moran_state_from_frequencies(st.ms, N, st.x);
        const auto p = estimate_fixation_probability(init, st.ms, sp, reps, 1000 + s, threads());
        const double h = fixation_probability_closed_form(init.frequencies(), st.ms, sp);
        const double z = (p.p_hat - h) / p.std_err;
        o.check(std::abs(z) <= 3.0, fmt::format("d={} alpha={} mu={} N={}: p_hat={:.4f} (SE {:.4f}) closed form "
                                                "{:.4f}, z={:+.2f}",
                                                st.ms.d, st.alpha, st.mu, N, p.p_hat, p.std_err, h, z));
    }
    return o;
}

// 2. Detailed balance of the conditioned Poisson law.
Outcome detailed_balance() {
    Outcome o;
    const std::vector<std::pair<const char*, MigrationStructure>> cases = {
        {"d=2 asymmetric", pair_asym()}, {"d=3 asymmetric", triple_asym()}, {"d=3 cyclic", triple_cycle()}};
    for (const auto& [name, ms] : cases)
        for (double alpha : {0.5, 2.0, 5.0}) {
            const double r = detailed_balance_check(ms, {alpha, 1.3, 0}, 8);
            o.check(r < 1e-12, fmt::format("{} alpha={} k_max=8: max residual {:.2e}", name, alpha, r));
        }
    return o;
}

// 3. Moment duality: SDE, ASG and truncated generator.
Outcome moment_duality() {
    Outcome o;
    const auto ms = build_migration(2, mat(2, {0, 2, 1, 0}));
    const SweepParams sp{1.0, 1.0, 0};
    struct Point {
        Counts k;
        Vector x;
        double tau;
    };
    const std::vector<Point> grid = {
        {{1, 0}, {0.3, 0.1}, 0.5}, {{1, 1}, {0.4, 0.2}, 0.25}, {{2, 1}, {0.05, 0.5}, 0.5},
        {{0, 3}, {0.6, 0.2}, 1.0}, {{2, 2}, {0.1, 0.1}, 0.5},  {{3, 1}, {0.8, 0.02}, 0.25},
    };
    auto cfg = IntegratorConfig::defaults(sp.alpha, false);
    const std::uint64_t reps = 100000;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto& p = grid[g];
        const auto d = duality_lhs_vs_rhs(p.k, p.x, p.tau, ms, sp, cfg, reps, 3000 + g, threads());
        const auto t = truncated_dual_moment_auto(p.k, p.x, p.tau, ms, sp, 1e-6);
        const bool ok = t.overflow_mass < 1e-6 && std::abs(d.lhs.mean - d.rhs.mean) < 3.0 * d.combined_se &&
                        std::abs(d.lhs.mean - t.value) < 3.0 * d.lhs.std_error + t.overflow_mass &&
                        std::abs(d.rhs.mean - t.value) < 3.0 * d.rhs.std_error + t.overflow_mass;
        o.check(ok, fmt::format("k=({},{}) x=({},{}) tau={}: SDE {:.5f}+-{:.5f} ASG {:.5f}+-{:.5f} oracle {:.6f} "
                                "(overflow {:.1e}, k_max {})",
                                p.k[0], p.k[1], p.x[0], p.x[1], p.tau, d.lhs.mean, d.lhs.std_error, d.rhs.mean,
                                d.rhs.std_error, t.value, t.overflow_mass, t.k_max));
    }
    return o;
}

// 4. Duality conditioned on fixation.
Outcome conditioned_duality() {
    Outcome o;
    struct Case {
        const char* name;
        MigrationStructure ms;
        SweepParams sp;
        Counts k;
        Vector x;
        double tau;
    };
    const std::vector<Case> cases = {
        {"d=1 alpha=2 k=1", MigrationStructure::single_colony(), {2.0, 0.0, 0}, {1}, {0.3}, 0.5},
        {"d=1 alpha=2 k=2", MigrationStructure::single_colony(), {2.0, 0.0, 0}, {2}, {0.1}, 0.5},
        {"d=2 alpha=2 mu=1 k=(1,1)", pair_asym(), {2.0, 1.0, 0}, {1, 1}, {0.3, 0.1}, 0.5},
    };
    const std::uint64_t accepted = 100000;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& cs = cases[c];
        const auto yz = conditioned_duality_estimate(cs.k, cs.x, cs.tau, cs.ms, cs.sp, accepted, 4000 + c, threads());
        const auto cfg = IntegratorConfig::defaults(cs.sp.alpha, true);
        const auto sde =
            conditioned_sde_moment(cs.k, cs.x, cs.tau, cs.ms, cs.sp, cfg, accepted, 4100 + c, threads());
        const double se = std::hypot(yz.std_error, sde.std_error);
        o.check(std::abs(yz.mean - sde.mean) < 3.0 * se,
                fmt::format("{} tau={}: coupled Y/Z {:.5f}+-{:.5f} ({} of {} accepted), conditioned SDE "
                            "{:.5f}+-{:.5f} ({} kept)",
                            cs.name, cs.tau, yz.mean, yz.std_error, yz.accepted, yz.attempted, sde.mean,
                            sde.std_error, sde.accepted));
    }
    return o;
}

void trend_check(Outcome& o, const std::string& label, const MigrationStructure& ms, const RegimeSpec& regime,
                 const std::vector<double>& grid, double target, double tolerance, bool require_monotone,
                 std::uint64_t seed) {
    std::vector<double> dev;
    std::string line;
    for (std::size_t a = 0; a < grid.size(); ++a) {
        const SweepParams sp{grid[a], resolve_regime(regime, grid[a]), 0};
        const auto s = scaled_hitting_times(ms, sp, 1000, seed + a);
        dev.push_back(median_deviation(s, target));
        line += fmt::format(" alpha=1e{:.0f}: median {:.4f} (dev {:.1f}%);", std::log10(grid[a]), median(s),
                            100 * dev.back());
    }
    bool monotone = true;
    for (std::size_t a = 1; a < dev.size(); ++a) monotone = monotone && dev[a] < dev[a - 1];
    o.check(dev.back() < tolerance, fmt::format("{} target {}:{} last deviation below {:.0f}%", label, target, line,
                                                100 * tolerance));
    if (require_monotone) o.check(monotone, label + ": deviation decreases along the alpha grid");
    else o.note(label + (monotone ? ": deviation decreases along the grid" : ": deviation not monotone on grid"));
}

// 5. Linear regime: scaled fixation time tends to 2.
Outcome regime_linear() {
    Outcome o;
    const std::vector<double> grid = {1e3, 1e4, 1e5};
    trend_check(o, "d=1", MigrationStructure::single_colony(), RegimeSpec::linear(), grid, 2.0, 0.10, true, 5000);
    trend_check(o, "d=2 mu=alpha", MigrationStructure::symmetric_pair(1.0), RegimeSpec::linear(), grid, 2.0, 0.10,
                true, 5100);
    return o;
}

// 6. Power regime: limit 2 + (1 - gamma) times the eccentricity.
Outcome regime_power() {
    Outcome o;
    const std::vector<double> grid = {1e4, 1e5};
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    for (double gamma : {0.0, 0.5}) {
        const double target = theorem2_limit(ms, RegimeSpec::power(gamma), 0).constant;
        trend_check(o, fmt::format("d=2 gamma={}", gamma), ms, RegimeSpec::power(gamma), grid, target, 0.15, false,
                    6000 + static_cast<std::uint64_t>(gamma * 100));
    }
    return o;
}

// 7. Inverse-log regime: 1 + S_J in distribution.
Outcome regime_inverse_log() {
    Outcome o;
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    const double alpha = 1e5;
    const SweepParams sp{alpha, resolve_regime(RegimeSpec::inverse_log(), alpha), 0};
    const auto scaled = scaled_hitting_times(ms, sp, 1000, 7000);
    const auto lim = theorem2_limit(ms, RegimeSpec::inverse_log(), 0);
    std::vector<double> ref;
    RngStream rng(7001, 0);
    for (int r = 0; r < 100000; ++r) ref.push_back(lim.sample(rng));
    const double ks = ks_two_sample(scaled, ref);
    o.check(ks < 0.1, fmt::format("alpha=1e5, 1e3 vs 1e5 samples: KS {:.4f}; medians {:.4f} vs {:.4f}, means {:.4f} "
                                  "vs {:.4f}",
                                  ks, median(scaled), median(ref),
                                  std::accumulate(scaled.begin(), scaled.end(), 0.0) / scaled.size(),
                                  std::accumulate(ref.begin(), ref.end(), 0.0) / ref.size()));
    return o;
}

// 8. Epidemic identities.
Outcome epidemics() {
    Outcome o;
    RngStream rng(8000, 0);
    int exact = 0;
    for (int g = 0; g < 10; ++g) {
        const int d = 2 + static_cast<int>(rng.below(5));
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
        std::vector<int> perm(d);
        for (int i = 0; i < d; ++i) perm[i] = i;
        for (int i = d - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        for (int i = 0; i < d; ++i) a(perm[i], perm[(i + 1) % d]) = 0.5 + rng.uniform();
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (i != j && rng.uniform() < 0.3) a(i, j) = 0.5 + rng.uniform();
        const int founder = static_cast<int>(rng.below(d));
        bool all = true;
        for (double gamma : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const auto times = simulate_epidemic_I(a, Eigen::MatrixXd::Constant(d, d, gamma), founder);
            all = all && epidemic_I_fixation(a, gamma, founder) == *std::max_element(times.begin(), times.end());
        }
        exact += all ? 1 : 0;
    }
    o.check(exact == 10, fmt::format("S_I closed form equals simulation on {}/10 random strongly connected graphs",
                                     exact));
    const auto ms = pair_asym();
    const double rate = 2.0 * ms.rho(0) * ms.a(0, 1);
    const auto s = run_replicates(8100, 100000, threads(), [&](RngStream& r, std::uint64_t) {
        return epidemic_J_sample(ms, 0, r);
    });
    const double ks =
        ks_one_sample(s, [rate](double x) { return x < 2.0 ? 0.0 : -std::expm1(-rate * (x - 2.0)); });
    o.check(ks < 0.02, fmt::format("S_J (d=2, rate {:.4f}) vs 2 + Exp: KS {:.4f} at 1e5 samples", rate, ks));
    return o;
}

// 9. L stays near 2 alpha rho over the initial window.
Outcome concentration() {
    Outcome o;
    const double alpha = 1e4;
    LMOptions opts;
    opts.track_concentration = true;
    struct Case {
        const char* name;
        MigrationStructure ms;
        double mu;
    };
    const std::vector<Case> cases = {{"d=1", MigrationStructure::single_colony(), 0.0},
                                     {"d=2 mu=alpha", MigrationStructure::symmetric_pair(1.0), alpha},
                                     {"d=2 mu=sqrt(alpha)", MigrationStructure::symmetric_pair(1.0), 100.0},
                                     {"d=3 asymmetric mu=alpha", triple_asym(), alpha}};
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const SweepParams sp{alpha, cases[c].mu, 0};
        const auto dev = run_replicates(9000 + c, 1000, threads(), [&](RngStream& rng, std::uint64_t) {
            return lm_hitting_time(cases[c].ms, sp, rng, opts).max_concentration_dev;
        });
        const auto inside = std::count_if(dev.begin(), dev.end(), [](double v) { return v < 0.15; });
        o.check(inside >= 950, fmt::format("{} alpha=1e4: {}/1000 replicates within the 15% band", cases[c].name,
                                           inside));
    }
    return o;
}

// 10. First successful migrant at (1 - gamma) log(alpha) / alpha.
Outcome first_migrant() {
    Outcome o;
    const double alpha = 1e4;
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    std::vector<double> medians, heuristics;
    for (double gamma : {0.25, 0.5, 0.75}) {
        const SweepParams sp{alpha, std::pow(alpha, gamma), 0};
        const auto t = run_replicates(10000 + static_cast<std::uint64_t>(gamma * 100), 1000, threads(),
                                      [&](RngStream& rng, std::uint64_t) {
                                          return alpha * first_successful_migrant_time(ms, sp, rng) / std::log(alpha);
                                      });
        medians.push_back(median(t));
        heuristics.push_back(std::log1p(alpha / sp.mu) / std::log(alpha));
        o.note(fmt::format("gamma={}: scaled median {:.4f}, 1-gamma = {}, log(1+alpha/mu)/log(alpha) = {:.4f}", gamma,
                           medians.back(), 1 - gamma, heuristics.back()));
    }
    const double dev = std::abs(medians[1] - 0.5) / 0.5;
    o.check(dev <= 0.20, fmt::format("gamma=0.5: median {:.4f} within 20% of 0.5 (deviation {:.1f}%)", medians[1],
                                     100 * dev));
    const bool monotone = medians[0] > medians[1] && medians[1] > medians[2];
    o.check(monotone, fmt::format("medians decrease in gamma like the heuristic: {:.4f} > {:.4f} > {:.4f}",
                                  medians[0], medians[1], medians[2]));
    return o;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 11. Byte-identical reruns.
Outcome reproducibility() {
    Outcome o;
    const auto root = std::filesystem::temp_directory_path() / "sweepsim_acceptance_repro";
    std::filesystem::remove_all(root);
    const std::vector<std::pair<ExperimentKind, nlohmann::json>> experiments = {
        {ExperimentKind::FixTime, nlohmann::json::parse(R"({
            "migration": {"d": 2, "b": [[0, 1], [1, 0]]}, "alpha_grid": [100, 1000],
            "regime": {"kind": "power", "gamma": 0.5}, "replicates": 200, "seed": 11})")},
        {ExperimentKind::Duality, nlohmann::json::parse(R"({
            "migration": {"d": 2, "b": [[0, 2], [1, 0]]}, "replicates": 2000, "seed": 12,
            "duality": {"alpha": 1, "mu": 1, "grid": [{"k": [1, 1], "x": [0.4, 0.2], "tau": 0.25}],
                        "conditioned": [{"k": [1, 0], "x": [0.3, 0.1], "tau": 0.25}]}})")},
    };
    for (const auto& [kind, doc] : experiments) {
        std::vector<std::map<std::string, std::string>> outputs;
        for (unsigned t : {1u, 2u, 1u}) {
            auto d = doc;
            d["threads"] = t;
            const auto cfg = parse_config(d, kind);
            const auto dir = root / fmt::format("{}_{}", to_string(kind), outputs.size());
            write_report(run_experiment(cfg), cfg, dir.string());
            std::map<std::string, std::string> files;
            for (const auto& e : std::filesystem::directory_iterator(dir))
                files[e.path().filename().string()] = slurp(e.path());
            outputs.push_back(files);
        }
        const bool same = outputs[0] == outputs[1] && outputs[0] == outputs[2];
        std::size_t bytes = 0;
        for (const auto& [_, text] : outputs[0]) bytes += text.size();
        o.check(same, fmt::format("{}: {} files, {} bytes identical across three runs (1, 2, 1 threads)",
                                  to_string(kind), outputs[0].size(), bytes));
    }
    std::filesystem::remove_all(root);
    return o;
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "fixation probability", fixation_probability},
        {2, "detailed balance", detailed_balance},
        {3, "moment duality", moment_duality},
        {4, "conditioned duality", conditioned_duality},
        {5, "linear regime", regime_linear},
        {6, "power regime", regime_power},
        {7, "inverse-log regime", regime_inverse_log},
        {8, "epidemic identities", epidemics},
        {9, "concentration", concentration},
        {10, "first successful migrant", first_migrant},
        {11, "reproducibility", reproducibility},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    bool pass = true;
    for (const auto& c : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("error: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& line : o.lines) std::printf("  %s\n", line.c_str());
        std::printf("%s criterion %d (%s) in %.1f s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs);
        std::fflush(stdout);
        pass = pass && o.pass;
    }
    return pass ? 0 : 1;
}
