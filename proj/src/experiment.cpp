#include "sweepsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "sweepsim/asg.hpp"
#include "sweepsim/diffusion.hpp"
#include "sweepsim/epidemics.hpp"
#include "sweepsim/errors.hpp"
#include "sweepsim/forward.hpp"
#include "sweepsim/lm.hpp"
#include "sweepsim/replicates.hpp"
#include "sweepsim/stats.hpp"

#ifndef SWEEPSIM_VERSION
#define SWEEPSIM_VERSION "unknown"
#endif

namespace sweepsim {

using nlohmann::json;

namespace {

constexpr const char* kKindNames[] = {"fixtime", "fixprob", "duality", "epidemic", "figure1", "lm"};

// Stream ids for replicate r of sub-experiment g.
constexpr std::uint64_t group_base(std::uint64_t g) { return g << 32; }

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
    if (!obj[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return obj[key].get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
    return obj.contains(key) ? get_number(obj, key, where) : fallback;
}

std::uint64_t get_count(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
    const auto& v = obj[key];
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
}

std::uint64_t count_or(const json& obj, const std::string& key, std::uint64_t fallback, const std::string& where) {
    return obj.contains(key) ? get_count(obj, key, where) : fallback;
}

Vector get_vector(const json& obj, const std::string& key, int d, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_array()) throw ConfigError(where + "." + key + ": expected an array");
    const auto& arr = obj[key];
    if (static_cast<int>(arr.size()) != d)
        throw ConfigError(where + "." + key + ": expected " + std::to_string(d) + " entries, got " +
                          std::to_string(arr.size()));
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        if (!arr[i].is_number()) throw ConfigError(where + "." + key + "[" + std::to_string(i + 1) + "]: not a number");
        v[i] = arr[i].get<double>();
    }
    return v;
}

Counts get_counts(const json& obj, const std::string& key, int d, const std::string& where) {
    const Vector v = get_vector(obj, key, d, where);
    Counts k(d);
    for (int i = 0; i < d; ++i) {
        if (v[i] < 0.0 || v[i] != std::floor(v[i]))
            throw ConfigError(where + "." + key + "[" + std::to_string(i + 1) + "]: expected a nonnegative integer");
        k[i] = static_cast<std::int64_t>(v[i]);
    }
    return k;
}

std::string join(const Vector& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_number(v[i]);
    return s;
}

std::string join(const Counts& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json describe_sample(std::vector<double> v) {
    RunningStats rs;
    for (double x : v) rs.add(x);
    return {{"n", v.size()},
            {"mean", finite_or_null(rs.mean())},
            {"std_error", finite_or_null(rs.std_error())},
            {"median", finite_or_null(median(v))},
            {"q10", finite_or_null(quantile(v, 0.10))},
            {"q25", finite_or_null(quantile(v, 0.25))},
            {"q75", finite_or_null(quantile(v, 0.75))},
            {"q90", finite_or_null(quantile(v, 0.90))}};
}

}  // namespace

ExperimentKind kind_from_string(const std::string& name) {
    for (int k = 0; k < 6; ++k)
        if (name == kKindNames[k]) return static_cast<ExperimentKind>(k);
    throw ConfigError("unknown experiment kind \"" + name + "\"");
}

const char* to_string(ExperimentKind kind) { return kKindNames[static_cast<int>(kind)]; }

const char* sweepsim_version() noexcept { return SWEEPSIM_VERSION; }

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json ExperimentConfig::canonical() const {
    json o = json::object();
    if (overrides.dt) o["dt"] = *overrides.dt;
    if (overrides.epsilon) o["epsilon"] = *overrides.epsilon;
    if (overrides.tolerance) o["tolerance"] = *overrides.tolerance;
    if (overrides.ks_tolerance) o["ks_tolerance"] = *overrides.ks_tolerance;
    if (overrides.truncation_tolerance) o["truncation_tolerance"] = *overrides.truncation_tolerance;
    if (overrides.n_init) o["n_init"] = *overrides.n_init;
    if (overrides.limit_samples) o["limit_samples"] = *overrides.limit_samples;
    if (overrides.max_events) o["max_events"] = *overrides.max_events;
    return {{"experiment", to_string(kind)},
            {"migration", migration_to_json(ms)},
            {"alpha_grid", alpha_grid},
            {"regime", regime_to_json(regime)},
            {"replicates", replicates},
            {"seed", seed},
            {"founder", founder + 1},
            {"overrides", o},
            {"section", section}};
}

std::string config_hash(const ExperimentConfig& cfg) {
    return fmt::format("{:016x}", fnv1a64(cfg.canonical().dump()));
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open \"" + path + "\"");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("\"" + path + "\": " + e.what());
    }
}

ExperimentConfig parse_config(const json& doc, ExperimentKind kind, const std::string& base_dir) {
    const std::string section_key = to_string(kind);
    reject_unknown(doc,
                   {"experiment", "migration", "migration_file", "alpha_grid", "regime", "replicates", "seed",
                    "output_dir", "founder", "threads", "overrides", section_key},
                   "config");
    ExperimentConfig cfg;
    cfg.kind = kind;
    if (doc.contains("experiment")) {
        if (!doc["experiment"].is_string()) throw ConfigError("config.experiment: expected a string");
        if (kind_from_string(doc["experiment"].get<std::string>()) != kind)
            throw ConfigError("config.experiment: \"" + doc["experiment"].get<std::string>() +
                              "\" does not match subcommand \"" + section_key + "\"");
    }
    if (doc.contains("migration") && doc.contains("migration_file"))
        throw ConfigError("config: give either \"migration\" or \"migration_file\", not both");
    try {
        if (doc.contains("migration")) {
            cfg.ms = migration_from_json(doc["migration"]);
        } else if (doc.contains("migration_file")) {
            if (!doc["migration_file"].is_string()) throw ConfigError("config.migration_file: expected a path");
            std::filesystem::path p = doc["migration_file"].get<std::string>();
            if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
            cfg.ms = migration_from_json(read_json_file(p.string()));
        } else if (kind == ExperimentKind::Figure1) {
            cfg.ms = MigrationStructure::symmetric_pair(1.0);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const SweepError& e) {
        throw ConfigError(std::string("config.migration: ") + e.what());
    }

    if (!doc.contains("seed")) throw ConfigError("config.seed: required (no default seed)");
    cfg.seed = get_count(doc, "seed", "config");
    cfg.replicates = count_or(doc, "replicates", cfg.replicates, "config");
    if (cfg.replicates < 1) throw ConfigError("config.replicates: must be at least 1");
    cfg.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, count_or(doc, "threads", 1, "config")));
    if (doc.contains("output_dir")) {
        if (!doc["output_dir"].is_string()) throw ConfigError("config.output_dir: expected a string");
        cfg.output_dir = doc["output_dir"].get<std::string>();
    }
    const auto founder = count_or(doc, "founder", 1, "config");
    if (founder < 1 || founder > static_cast<std::uint64_t>(cfg.ms.d))
        throw ConfigError("config.founder: must lie in 1.." + std::to_string(cfg.ms.d));
    cfg.founder = static_cast<int>(founder) - 1;

    if (doc.contains("alpha_grid")) {
        const auto& g = doc["alpha_grid"];
        if (!g.is_array() || g.empty()) throw ConfigError("config.alpha_grid: expected a nonempty array");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!g[i].is_number()) throw ConfigError("config.alpha_grid[" + std::to_string(i + 1) + "]: not a number");
            const double a = g[i].get<double>();
            if (!(a > 1.0)) throw ConfigError("config.alpha_grid[" + std::to_string(i + 1) + "]: must exceed 1");
            if (!cfg.alpha_grid.empty() && !(a > cfg.alpha_grid.back()))
                throw ConfigError("config.alpha_grid: must be strictly increasing");
            cfg.alpha_grid.push_back(a);
        }
    } else if (kind == ExperimentKind::FixTime || kind == ExperimentKind::LM) {
        throw ConfigError("config.alpha_grid: required for " + section_key);
    }
    if (doc.contains("regime")) {
        try {
            cfg.regime = regime_from_json(doc["regime"]);
        } catch (const ConfigError&) {
            throw;
        } catch (const SweepError& e) {
            throw ConfigError(std::string("config.regime: ") + e.what());
        }
    }

    if (doc.contains("overrides")) {
        const auto& o = doc["overrides"];
        reject_unknown(o,
                       {"dt", "epsilon", "tolerance", "ks_tolerance", "truncation_tolerance", "n_init",
                        "limit_samples", "max_events"},
                       "config.overrides");
        auto positive = [&](const char* key) -> std::optional<double> {
            if (!o.contains(key)) return std::nullopt;
            const double v = get_number(o, key, "config.overrides");
            if (!(v > 0.0)) throw ConfigError(std::string("config.overrides.") + key + ": must be positive");
            return v;
        };
        auto count = [&](const char* key) -> std::optional<std::uint64_t> {
            if (!o.contains(key)) return std::nullopt;
            const auto v = get_count(o, key, "config.overrides");
            if (v < 1) throw ConfigError(std::string("config.overrides.") + key + ": must be at least 1");
            return v;
        };
        cfg.overrides.dt = positive("dt");
        cfg.overrides.epsilon = positive("epsilon");
        cfg.overrides.tolerance = positive("tolerance");
        cfg.overrides.ks_tolerance = positive("ks_tolerance");
        cfg.overrides.truncation_tolerance = positive("truncation_tolerance");
        cfg.overrides.n_init = count("n_init");
        cfg.overrides.limit_samples = count("limit_samples");
        cfg.overrides.max_events = count("max_events");
        if (cfg.overrides.epsilon && *cfg.overrides.epsilon > 1.0)
            throw ConfigError("config.overrides.epsilon: must not exceed 1");
    }
    if (doc.contains(section_key)) {
        if (!doc[section_key].is_object()) throw ConfigError("config." + section_key + ": expected an object");
        cfg.section = doc[section_key];
    }
    return cfg;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{}", v);
}

CsvWriter::CsvWriter(const std::vector<std::string>& columns) : columns_(columns.size()) {
    text_ = "# sweepsim-csv v1\n";
    for (std::size_t i = 0; i < columns.size(); ++i) text_ += (i ? "," : "") + columns[i];
    text_ += '\n';
}

CsvWriter& CsvWriter::cell(const std::string& s) {
    if (pending_ >= columns_) throw SweepError("csv: too many cells in row");
    if (pending_++) text_ += ',';
    if (s.find_first_of(",\"\n") != std::string::npos) {
        text_ += '"';
        for (char c : s) text_ += c == '"' ? std::string("\"\"") : std::string(1, c);
        text_ += '"';
    } else {
        text_ += s;
    }
    return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_number(v)); }
CsvWriter& CsvWriter::cell(std::uint64_t v) { return cell(std::to_string(v)); }
CsvWriter& CsvWriter::cell(std::int64_t v) { return cell(std::to_string(v)); }

void CsvWriter::end_row() {
    if (pending_ != columns_) throw SweepError("csv: row has " + std::to_string(pending_) + " cells, expected " +
                                               std::to_string(columns_));
    text_ += '\n';
    pending_ = 0;
}

namespace {

void fail(ExperimentReport& rep, const std::string& why) {
    rep.pass = false;
    rep.failures.push_back(why);
}

}  // namespace

ExperimentReport run_regime_experiment(const ExperimentConfig& cfg) {
    reject_unknown(cfg.section, {}, "config.fixtime");
    ExperimentReport rep;
    rep.kind = ExperimentKind::FixTime;
    const Theorem2Limit lim = theorem2_limit(cfg.ms, cfg.regime, cfg.founder);

    std::vector<double> limit_samples;
    if (lim.stochastic) {
        const std::uint64_t n = cfg.overrides.limit_samples.value_or(100000);
        RngStream rng(mix64(cfg.seed ^ 0x5eed11a17ULL), 0);
        limit_samples.reserve(n);
        for (std::uint64_t r = 0; r < n; ++r) limit_samples.push_back(lim.sample(rng));
    }
    const double center = lim.stochastic ? median(limit_samples) : lim.constant;
    double tolerance = cfg.overrides.tolerance.value_or(0.0);
    if (!cfg.overrides.tolerance)
        tolerance = cfg.regime.kind == RegimeSpec::Kind::LinearAlpha ? 0.10 : 0.15;
    const double ks_tolerance = cfg.overrides.ks_tolerance.value_or(0.1);

    CsvWriter csv({"replicate_id", "alpha", "mu", "regime", "T", "scaled_T", "first_migrant_time", "events", "seed"});
    json per_alpha = json::array();
    std::vector<double> deviations;
    double last_ks = std::numeric_limits<double>::quiet_NaN();
    LMOptions opts;
    if (cfg.overrides.max_events) opts.max_events = *cfg.overrides.max_events;
    for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
        const SweepParams sp{cfg.alpha_grid[a], resolve_regime(cfg.regime, cfg.alpha_grid[a]), cfg.founder};
        const auto results = run_replicates(
            cfg.seed, cfg.replicates, cfg.threads,
            [&](RngStream& rng, std::uint64_t) { return lm_hitting_time(cfg.ms, sp, rng, opts); }, group_base(a));
        std::vector<double> scaled;
        for (std::uint64_t r = 0; r < results.size(); ++r) {
            const auto& res = results[r];
            scaled.push_back(res.scaled);
            csv.cell(r).cell(sp.alpha).cell(sp.mu).cell(cfg.regime.label()).cell(res.T).cell(res.scaled)
                .cell(res.first_migrant_time).cell(res.events).cell(cfg.seed);
            csv.end_row();
        }
        json entry = describe_sample(scaled);
        entry["alpha"] = sp.alpha;
        entry["mu"] = sp.mu;
        entry["replicates"] = cfg.replicates;
        entry["seed"] = cfg.seed;
        const double dev = std::abs(entry["median"].get<double>() - center) / center;
        entry["deviation"] = dev;
        deviations.push_back(dev);
        if (lim.stochastic) {
            last_ks = ks_two_sample(scaled, limit_samples);
            entry["ks_distance"] = last_ks;
        }
        per_alpha.push_back(entry);
    }

    json limit = {{"stochastic", lim.stochastic}, {"center", center}};
    if (lim.stochastic) limit["samples"] = describe_sample(limit_samples);
    else limit["constant"] = lim.constant;

    bool monotone = true;
    for (std::size_t a = 1; a < deviations.size(); ++a) monotone = monotone && deviations[a] < deviations[a - 1];
    if (lim.stochastic) {
        if (!(last_ks < ks_tolerance))
            fail(rep, fmt::format("KS distance {} at the largest alpha is not below {}", last_ks, ks_tolerance));
    } else {
        if (!monotone) fail(rep, "median deviation does not decrease along the alpha grid");
        if (!(deviations.back() < tolerance))
            fail(rep, fmt::format("median deviation {} at the largest alpha is not below {}", deviations.back(),
                                  tolerance));
    }
    rep.summary = {{"regime", regime_to_json(cfg.regime)},
                   {"limit", limit},
                   {"per_alpha", per_alpha},
                   {"monotone_deviation", monotone},
                   {"tolerance", lim.stochastic ? ks_tolerance : tolerance}};
    rep.files["fixtime.csv"] = csv.str();
    return rep;
}

ExperimentReport run_lm_experiment(const ExperimentConfig& cfg) {
    const std::string where = "config.lm";
    reject_unknown(cfg.section, {"band", "coverage", "migrant_tolerance"}, where);
    const double band = number_or(cfg.section, "band", 0.15, where);
    const double coverage = number_or(cfg.section, "coverage", 0.95, where);
    const double migrant_tol = number_or(cfg.section, "migrant_tolerance", 0.20, where);
    ExperimentReport rep;
    rep.kind = ExperimentKind::LM;
    LMOptions opts;
    opts.track_concentration = true;
    if (cfg.overrides.max_events) opts.max_events = *cfg.overrides.max_events;

    CsvWriter csv({"replicate_id", "alpha", "mu", "regime", "T", "scaled_T", "first_migrant_time",
                   "scaled_first_migrant", "max_concentration_dev", "events", "seed"});
    json per_alpha = json::array();
    for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
        const double alpha = cfg.alpha_grid[a];
        const SweepParams sp{alpha, resolve_regime(cfg.regime, alpha), cfg.founder};
        const auto results = run_replicates(
            cfg.seed, cfg.replicates, cfg.threads,
            [&](RngStream& rng, std::uint64_t) { return lm_hitting_time(cfg.ms, sp, rng, opts); }, group_base(a));
        std::vector<double> scaled, migrant;
        std::uint64_t within = 0;
        for (std::uint64_t r = 0; r < results.size(); ++r) {
            const auto& res = results[r];
            const double sm = alpha * res.first_migrant_time / std::log(alpha);
            scaled.push_back(res.scaled);
            migrant.push_back(sm);
            within += res.max_concentration_dev < band ? 1 : 0;
            csv.cell(r).cell(alpha).cell(sp.mu).cell(cfg.regime.label()).cell(res.T).cell(res.scaled)
                .cell(res.first_migrant_time).cell(sm).cell(res.max_concentration_dev).cell(res.events)
                .cell(cfg.seed);
            csv.end_row();
        }
        const double frac = static_cast<double>(within) / static_cast<double>(results.size());
        json entry = {{"alpha", alpha},
                      {"mu", sp.mu},
                      {"replicates", cfg.replicates},
                      {"seed", cfg.seed},
                      {"scaled_T", describe_sample(scaled)},
                      {"concentration_fraction", frac},
                      {"band", band}};
        if (sp.mu <= alpha && !(frac >= coverage))
            fail(rep, fmt::format("alpha={}: concentration held in {} of runs, below {}", alpha, frac, coverage));
        if (cfg.ms.d >= 2) {
            const double med = median(migrant);
            entry["scaled_first_migrant"] = describe_sample(migrant);
            entry["first_migrant_heuristic"] = std::log1p(alpha / std::max(sp.mu, 1e-300)) / std::log(alpha);
            if (cfg.regime.kind == RegimeSpec::Kind::PowerGamma) {
                const double target = 1.0 - cfg.regime.gamma;
                entry["first_migrant_target"] = target;
                if (target > 0.0 && !(std::abs(med - target) <= migrant_tol * target))
                    fail(rep, fmt::format("alpha={}: first-migrant median {} outside {}% of {}", alpha, med,
                                          100.0 * migrant_tol, target));
            }
        }
        per_alpha.push_back(entry);
    }
    rep.summary = {{"regime", regime_to_json(cfg.regime)}, {"per_alpha", per_alpha}};
    rep.files["lm.csv"] = csv.str();
    return rep;
}

ExperimentReport run_fixprob_experiment(const ExperimentConfig& cfg) {
    const std::string where = "config.fixprob";
    reject_unknown(cfg.section, {"N", "settings", "z_threshold"}, where);
    const auto N = static_cast<std::int64_t>(count_or(cfg.section, "N", 1000, where));
    const double z_threshold = number_or(cfg.section, "z_threshold", 3.0, where);
    if (!cfg.section.contains("settings") || !cfg.section["settings"].is_array() || cfg.section["settings"].empty())
        throw ConfigError(where + ".settings: expected a nonempty array");
    ExperimentReport rep;
    rep.kind = ExperimentKind::FixProb;
    CsvWriter csv({"setting", "replicate_id", "outcome", "absorption_time", "seed", "stream_id"});
    json per_setting = json::array();
    const auto& settings = cfg.section["settings"];
    for (std::size_t s = 0; s < settings.size(); ++s) {
        const std::string sw = where + ".settings[" + std::to_string(s + 1) + "]";
        const json& st = settings[s];
        reject_unknown(st, {"alpha", "mu", "x", "migration"}, sw);
        MigrationStructure ms = cfg.ms;
        if (st.contains("migration")) ms = migration_from_json(st["migration"]);
        SweepParams sp{get_number(st, "alpha", sw), number_or(st, "mu", 0.0, sw), 0};
        if (!(sp.alpha >= 0.0) || !(sp.mu >= 0.0)) throw ConfigError(sw + ": alpha and mu must be nonnegative");
        const MoranState init = moran_state_from_frequencies(ms, N, get_vector(st, "x", ms.d, sw));
        const Vector x = init.frequencies();
        const auto results = run_replicates(
            cfg.seed, cfg.replicates, cfg.threads,
            [&](RngStream& rng, std::uint64_t) { return moran_fixation_run(init, ms, sp, rng); }, group_base(s));
        std::uint64_t fixed = 0;
        for (std::uint64_t r = 0; r < results.size(); ++r) {
            fixed += results[r].fixed ? 1 : 0;
            csv.cell(static_cast<std::uint64_t>(s + 1)).cell(r).cell(results[r].fixed ? "fixed" : "lost")
                .cell(results[r].time).cell(cfg.seed).cell(group_base(s) + r);
            csv.end_row();
        }
        const Proportion p = proportion(fixed, cfg.replicates);
        const double h = fixation_probability_closed_form(x, ms, sp);
        const double z = p.std_err > 0.0 ? (p.p_hat - h) / p.std_err : (p.p_hat == h ? 0.0 : INFINITY);
        const bool ok = std::abs(z) <= z_threshold;
        if (!ok) fail(rep, fmt::format("setting {}: z-score {} exceeds {}", s + 1, z, z_threshold));
        per_setting.push_back({{"setting", s + 1},
                               {"d", ms.d},
                               {"rho", std::vector<double>(ms.rho.data(), ms.rho.data() + ms.d)},
                               {"alpha", sp.alpha},
                               {"mu", sp.mu},
                               {"N", N},
                               {"x_realized", x},
                               {"p_hat", p.p_hat},
                               {"std_error", p.std_err},
                               {"closed_form", h},
                               {"z", finite_or_null(z)},
                               {"pass", ok},
                               {"replicates", cfg.replicates},
                               {"seed", cfg.seed}});
    }
    rep.summary = {{"settings", per_setting}, {"z_threshold", z_threshold}};
    rep.files["fixprob.csv"] = csv.str();
    return rep;
}

std::int64_t default_n_init(const MigrationStructure& ms, double alpha, int i) {
    return std::max<std::int64_t>(100, 10 * static_cast<std::int64_t>(std::ceil(2.0 * alpha * ms.rho(i))));
}

ExperimentReport run_duality_experiment(const ExperimentConfig& cfg) {
    const std::string where = "config.duality";
    reject_unknown(cfg.section, {"alpha", "mu", "grid", "conditioned", "infinite"}, where);
    const SweepParams sp{number_or(cfg.section, "alpha", 1.0, where), number_or(cfg.section, "mu", 1.0, where),
                         cfg.founder};
    if (!(sp.alpha > 0.0 && sp.alpha <= 10.0)) throw ConfigError(where + ".alpha: must lie in (0, 10]");
    if (!(sp.mu >= 0.0)) throw ConfigError(where + ".mu: must be nonnegative");
    const auto& ms = cfg.ms;
    IntegratorConfig icfg = IntegratorConfig::defaults(sp.alpha, false);
    if (cfg.overrides.dt) icfg.dt = *cfg.overrides.dt;
    const double trunc_tol = cfg.overrides.truncation_tolerance.value_or(1e-6);

    ExperimentReport rep;
    rep.kind = ExperimentKind::Duality;
    CsvWriter csv({"setting", "kind", "k", "x", "tau", "lhs", "lhs_se", "rhs", "rhs_se", "oracle", "overflow_mass",
                   "replicates", "pass"});
    json rows = json::array();
    std::uint64_t setting = 0;
    auto row = [&](const std::string& kind, const Counts& k, const std::string& x, double tau, double lhs,
                   double lhs_se, double rhs, double rhs_se, double oracle, double overflow, std::uint64_t reps,
                   bool ok, std::uint64_t seed) {
        csv.cell(setting).cell(kind).cell(join(k)).cell(x).cell(tau).cell(lhs).cell(lhs_se).cell(rhs).cell(rhs_se)
            .cell(oracle).cell(overflow).cell(reps).cell(ok ? "pass" : "fail");
        csv.end_row();
        rows.push_back({{"setting", setting},
                        {"kind", kind},
                        {"k", k},
                        {"x", x},
                        {"tau", tau},
                        {"lhs_hat", finite_or_null(lhs)},
                        {"rhs_hat", finite_or_null(rhs)},
                        {"oracle", finite_or_null(oracle)},
                        {"overflow_mass", finite_or_null(overflow)},
                        {"std_errs", {finite_or_null(lhs_se), finite_or_null(rhs_se)}},
                        {"replicates", reps},
                        {"seed", seed},
                        {"pass", ok}});
        if (!ok) fail(rep, fmt::format("{} setting {} failed", kind, setting));
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();

    if (cfg.section.contains("grid")) {
        const auto& grid = cfg.section["grid"];
        if (!grid.is_array()) throw ConfigError(where + ".grid: expected an array");
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::string gw = where + ".grid[" + std::to_string(g + 1) + "]";
            reject_unknown(grid[g], {"k", "x", "tau"}, gw);
            const Counts k = get_counts(grid[g], "k", ms.d, gw);
            const Vector x = get_vector(grid[g], "x", ms.d, gw);
            const double tau = get_number(grid[g], "tau", gw);
            ++setting;
            const std::uint64_t seed = mix64(cfg.seed + setting);
            const auto d = duality_lhs_vs_rhs(k, x, tau, ms, sp, icfg, cfg.replicates, seed, cfg.threads);
            const auto o = truncated_dual_moment_auto(k, x, tau, ms, sp, trunc_tol);
            const bool ok = std::abs(d.lhs.mean - d.rhs.mean) < 3.0 * d.combined_se &&
                            std::abs(d.lhs.mean - o.value) < 3.0 * d.lhs.std_error + o.overflow_mass &&
                            std::abs(d.rhs.mean - o.value) < 3.0 * d.rhs.std_error + o.overflow_mass;
            row("unconditioned", k, join(x), tau, d.lhs.mean, d.lhs.std_error, d.rhs.mean, d.rhs.std_error, o.value,
                o.overflow_mass, cfg.replicates, ok, seed);
        }
    }
    if (cfg.section.contains("conditioned")) {
        const auto& grid = cfg.section["conditioned"];
        if (!grid.is_array()) throw ConfigError(where + ".conditioned: expected an array");
        IntegratorConfig ccfg = icfg;
        ccfg.conditioned = true;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::string gw = where + ".conditioned[" + std::to_string(g + 1) + "]";
            reject_unknown(grid[g], {"k", "x", "tau", "founder", "epsilon"}, gw);
            const Counts k = get_counts(grid[g], "k", ms.d, gw);
            const double tau = get_number(grid[g], "tau", gw);
            ++setting;
            const std::uint64_t seed = mix64(cfg.seed + setting);
            if (grid[g].contains("x") == grid[g].contains("founder"))
                throw ConfigError(gw + ": give exactly one of \"x\" and \"founder\"");
            if (grid[g].contains("x")) {
                const Vector x = get_vector(grid[g], "x", ms.d, gw);
                const auto yz = conditioned_duality_estimate(k, x, tau, ms, sp, cfg.replicates, seed, cfg.threads);
                const auto sde = conditioned_sde_moment(k, x, tau, ms, sp, ccfg, cfg.replicates, mix64(seed),
                                                        cfg.threads);
                const bool ok = std::abs(yz.mean - sde.mean) < 3.0 * std::hypot(yz.std_error, sde.std_error);
                row("conditioned", k, join(x), tau, sde.mean, sde.std_error, yz.mean, yz.std_error, nan, nan,
                    cfg.replicates, ok, seed);
            } else {
                const auto f = get_count(grid[g], "founder", gw);
                if (f < 1 || f > static_cast<std::uint64_t>(ms.d)) throw ConfigError(gw + ".founder: out of range");
                const int founder = static_cast<int>(f) - 1;
                const double eps = number_or(grid[g], "epsilon", cfg.overrides.epsilon.value_or(1e-3), gw);
                const auto yz =
                    conditioned_duality_small_marking(k, founder, tau, ms, sp, cfg.replicates, seed, cfg.threads);
                Vector x(ms.d, 0.0);
                x[founder] = eps;
                const auto sde = conditioned_sde_moment(k, x, tau, ms, sp, ccfg, cfg.replicates, mix64(seed),
                                                        cfg.threads);
                const bool ok = std::abs(yz.mean - sde.mean) < 3.0 * std::hypot(yz.std_error, sde.std_error);
                row("small_marking", k, "founder " + std::to_string(f) + " eps " + format_number(eps), tau,
                    sde.mean, sde.std_error, yz.mean, yz.std_error, nan, nan, cfg.replicates, ok, seed);
            }
        }
    }
    if (cfg.section.contains("infinite")) {
        const auto& grid = cfg.section["infinite"];
        if (!grid.is_array()) throw ConfigError(where + ".infinite: expected an array");
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::string gw = where + ".infinite[" + std::to_string(g + 1) + "]";
            reject_unknown(grid[g], {"x", "tau"}, gw);
            const Vector x = get_vector(grid[g], "x", ms.d, gw);
            const double tau = get_number(grid[g], "tau", gw);
            Counts k(ms.d);
            for (int i = 0; i < ms.d; ++i)
                k[i] = cfg.overrides.n_init ? static_cast<std::int64_t>(*cfg.overrides.n_init)
                                            : default_n_init(ms, sp.alpha, i);
            ++setting;
            const std::uint64_t seed = mix64(cfg.seed + setting);
            const auto r = duality_rhs(k, x, tau, ms, sp, cfg.replicates, seed, cfg.threads);
            row("infinite", k, join(x), tau, nan, nan, r.mean, r.std_error, nan, nan, cfg.replicates, true, seed);
        }
    }
    if (setting == 0) throw ConfigError(where + ": no settings given");
    rep.summary = {{"alpha", sp.alpha}, {"mu", sp.mu}, {"dt", icfg.dt}, {"settings", rows}};
    rep.files["duality.csv"] = csv.str();
    return rep;
}

ExperimentReport run_epidemic_experiment(const ExperimentConfig& cfg) {
    const std::string where = "config.epidemic";
    reject_unknown(cfg.section, {"kind", "gamma", "gamma_matrix", "samples"}, where);
    if (!cfg.section.contains("kind") || !cfg.section["kind"].is_string())
        throw ConfigError(where + ".kind: expected \"I\" or \"J\"");
    const std::string kind = cfg.section["kind"].get<std::string>();
    const auto& ms = cfg.ms;
    ExperimentReport rep;
    rep.kind = ExperimentKind::Epidemic;
    if (kind == "I") {
        Eigen::MatrixXd gamma(ms.d, ms.d);
        std::optional<double> scalar;
        if (cfg.section.contains("gamma_matrix")) {
            if (cfg.section.contains("gamma")) throw ConfigError(where + ": give either gamma or gamma_matrix");
            const auto& rows = cfg.section["gamma_matrix"];
            if (!rows.is_array() || static_cast<int>(rows.size()) != ms.d)
                throw ConfigError(where + ".gamma_matrix: expected " + std::to_string(ms.d) + " rows");
            for (int i = 0; i < ms.d; ++i) {
                const Vector row = get_vector(json{{"row", rows[i]}}, "row", ms.d,
                                              where + ".gamma_matrix[" + std::to_string(i + 1) + "]");
                for (int j = 0; j < ms.d; ++j) gamma(i, j) = row[j];
            }
        } else {
            scalar = get_number(cfg.section, "gamma", where);
            gamma.setConstant(*scalar);
        }
        const double closed = scalar ? epidemic_I_fixation(ms.a, *scalar, cfg.founder)
                                     : epidemic_I_fixation(ms.a, gamma, cfg.founder);
        const auto times = simulate_epidemic_I(ms.a, gamma, cfg.founder);
        const double simulated = *std::max_element(times.begin(), times.end());
        CsvWriter csv({"colony", "infection_time"});
        for (int i = 0; i < ms.d; ++i) {
            csv.cell(i + 1).cell(times[i]);
            csv.end_row();
        }
        if (closed != simulated) fail(rep, fmt::format("closed form {} differs from simulation {}", closed, simulated));
        rep.summary = {{"kind", "I"}, {"S_I", closed}, {"S_I_simulated", simulated}, {"infection_times", times}};
        if (scalar) rep.summary["gamma"] = *scalar;
        rep.files["epidemic_I.csv"] = csv.str();
    } else if (kind == "J") {
        if (cfg.section.contains("gamma") || cfg.section.contains("gamma_matrix"))
            throw ConfigError(where + ": gamma is not used by kind J");
        const std::uint64_t n = count_or(cfg.section, "samples", cfg.replicates, where);
        const auto samples = run_replicates(cfg.seed, n, cfg.threads, [&](RngStream& rng, std::uint64_t) {
            return epidemic_J_sample(ms, cfg.founder, rng);
        });
        CsvWriter csv({"sample_id", "S_J", "seed"});
        for (std::uint64_t r = 0; r < samples.size(); ++r) {
            csv.cell(r).cell(samples[r]).cell(cfg.seed);
            csv.end_row();
        }
        rep.summary = {{"kind", "J"}, {"S_J", describe_sample(samples)}, {"seed", cfg.seed}};
        if (ms.d == 2) {
            const int other = 1 - cfg.founder;
            const double rate = 2.0 * ms.rho(cfg.founder) * ms.a(cfg.founder, other);
            const double ks = ks_one_sample(samples, [rate](double s) {
                return s < 2.0 ? 0.0 : -std::expm1(-rate * (s - 2.0));
            });
            rep.summary["reference"] = {{"law", "2 + Exp(rate)"}, {"rate", rate}, {"ks_distance", ks}};
        }
        rep.files["epidemic_J.csv"] = csv.str();
    } else {
        throw ConfigError(where + ".kind: expected \"I\" or \"J\"");
    }
    return rep;
}

ExperimentReport run_figure1(const ExperimentConfig& cfg) {
    const std::string where = "config.figure1";
    reject_unknown(cfg.section, {"panels", "runs", "max_attempts"}, where);
    std::vector<std::string> panels = {"A", "B"};
    if (cfg.section.contains("panels")) {
        panels.clear();
        for (const auto& p : cfg.section["panels"]) {
            if (!p.is_string() || (p != "A" && p != "B")) throw ConfigError(where + ".panels: entries are \"A\" or \"B\"");
            panels.push_back(p.get<std::string>());
        }
    }
    const std::uint64_t runs = count_or(cfg.section, "runs", 1, where);
    const std::uint64_t max_attempts = count_or(cfg.section, "max_attempts", 1000000, where);
    ExperimentReport rep;
    rep.kind = ExperimentKind::Figure1;
    json out = json::array();
    for (const std::string& panel : panels) {
        const bool a = panel == "A";
        const std::int64_t N = a ? 10000 : 100000;
        const double s = a ? 0.01 : 0.1;
        const double m = a ? 0.001 : 1.0 / (static_cast<double>(N) * std::log(static_cast<double>(N) * s));
        const std::uint64_t group = a ? 0 : 1;
        const auto trajs = run_replicates(
            cfg.seed, runs, cfg.threads,
            [&](RngStream& rng, std::uint64_t) {
                return wf_conditioned_sweep(cfg.ms, N, s, m, cfg.founder, rng, max_attempts);
            },
            group_base(group));
        for (std::uint64_t r = 0; r < trajs.size(); ++r) {
            std::vector<std::string> cols = {"generation"};
            for (int i = 0; i < cfg.ms.d; ++i) cols.push_back("freq_" + std::to_string(i + 1));
            CsvWriter csv(cols);
            const auto& tr = trajs[r];
            for (std::size_t g = 0; g < tr.generation.size(); ++g) {
                csv.cell(tr.generation[g]);
                for (double f : tr.freq[g]) csv.cell(f);
                csv.end_row();
            }
            const std::int64_t fix_gen = tr.generation.back();
            rep.files["figure1_" + panel + "_run" + std::to_string(r) + ".csv"] = csv.str();
            out.push_back({{"panel", panel},
                           {"run", r},
                           {"N", N},
                           {"s", s},
                           {"m", m},
                           {"fixation_generation", fix_gen},
                           {"scaled_fixation", static_cast<double>(fix_gen) * s / std::log(static_cast<double>(N) * s)},
                           {"attempts", tr.attempts},
                           {"final_frequencies", tr.freq.back()}});
        }
    }
    rep.summary = {{"runs", out}};
    return rep;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    try {
        switch (cfg.kind) {
            case ExperimentKind::FixTime: return run_regime_experiment(cfg);
            case ExperimentKind::FixProb: return run_fixprob_experiment(cfg);
            case ExperimentKind::Duality: return run_duality_experiment(cfg);
            case ExperimentKind::Epidemic: return run_epidemic_experiment(cfg);
            case ExperimentKind::Figure1: return run_figure1(cfg);
            case ExperimentKind::LM: return run_lm_experiment(cfg);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    throw ConfigError("unknown experiment kind");
}

json report_document(const ExperimentReport& report, const ExperimentConfig& cfg) {
    std::vector<std::string> files;
    for (const auto& [name, _] : report.files) files.push_back(name);
    return {{"experiment", to_string(report.kind)},
            {"version", sweepsim_version()},
            {"seed", cfg.seed},
            {"config_hash", config_hash(cfg)},
            {"config", cfg.canonical()},
            {"pass", report.pass},
            {"failures", report.failures},
            {"files", files},
            {"summary", report.summary}};
}

void write_report(const ExperimentReport& report, const ExperimentConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& text) {
        const auto path = std::filesystem::path(dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw SweepError("cannot write \"" + path.string() + "\"");
        out << text;
    };
    for (const auto& [name, text] : report.files) write(name, text);
    write(std::string(to_string(report.kind)) + "_report.json", report_document(report, cfg).dump(2) + "\n");
}

}  // namespace sweepsim
