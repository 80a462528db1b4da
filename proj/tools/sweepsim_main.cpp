// Command-line front end: one subcommand per experiment kind.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sweepsim/epidemics.hpp"
#include "sweepsim/errors.hpp"
#include "sweepsim/experiment.hpp"

using nlohmann::json;
using namespace sweepsim;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitError = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> replicates;
    std::optional<unsigned> threads;
    std::string out;
};

struct EpidemicFlags {
    std::string kind;
    std::string graph;
    std::optional<double> gamma;
    std::string gamma_matrix;
    std::optional<int> founder;
    std::optional<std::uint64_t> samples;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
    auto* opt = sub->add_option("--config", f.config, "JSON config document");
    if (config_required) opt->required();
    sub->add_option("--seed", f.seed, "u64 seed (overrides config)");
    sub->add_option("--out", f.out, "output directory (overrides config)");
    sub->add_option("--replicates", f.replicates, "replicate count (overrides config)")->check(CLI::PositiveNumber);
    sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

// Builds the epidemic config from flags when no --config is given, and
// lets flags override config entries otherwise.
void apply_epidemic_flags(json& doc, const EpidemicFlags& e, const std::string& base) {
    json& sec = doc["epidemic"];
    if (!sec.is_object()) sec = json::object();
    if (!e.kind.empty()) sec["kind"] = e.kind;
    if (!e.graph.empty()) {
        doc.erase("migration");
        doc["migration_file"] = std::filesystem::absolute(e.graph).string();
    }
    if (e.gamma) {
        sec.erase("gamma_matrix");
        sec["gamma"] = *e.gamma;
    }
    if (!e.gamma_matrix.empty()) {
        sec.erase("gamma");
        json m = read_json_file(e.gamma_matrix);
        if (m.is_object() && m.contains("gamma")) m = m["gamma"];
        sec["gamma_matrix"] = m;
    }
    if (e.founder) doc["founder"] = *e.founder;
    if (e.samples) sec["samples"] = *e.samples;
    (void)base;
}

int run(ExperimentKind kind, const CommonFlags& f, const EpidemicFlags* epi) {
    json doc = json::object();
    std::string base = ".";
    if (!f.config.empty()) {
        doc = read_json_file(f.config);
        base = std::filesystem::absolute(f.config).parent_path().string();
    }
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    if (f.seed) doc["seed"] = *f.seed;
    if (f.replicates) doc["replicates"] = *f.replicates;
    if (f.threads) doc["threads"] = *f.threads;
    if (epi) apply_epidemic_flags(doc, *epi, base);

    const ExperimentConfig cfg = parse_config(doc, kind, base);
    const std::string out = f.out.empty() ? cfg.output_dir : f.out;
    const ExperimentReport rep = run_experiment(cfg);
    write_report(rep, cfg, out);

    if (kind == ExperimentKind::Epidemic && rep.summary.value("kind", "") == "I")
        std::cout << format_number(rep.summary["S_I"].get<double>()) << '\n';
    std::cout << to_string(kind) << ": " << (rep.pass ? "PASS" : "FAIL") << " (config " << config_hash(cfg)
              << ", seed " << cfg.seed << ", output " << out << ")\n";
    for (const auto& why : rep.failures) std::cout << "  " << why << '\n';
    return rep.pass ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective sweeps in structured populations: simulation experiments"};
    app.set_version_flag("--version", std::string(sweepsim_version()));
    app.require_subcommand(1);

    CommonFlags common;
    EpidemicFlags epi;
    struct Sub {
        const char* name;
        const char* help;
        ExperimentKind kind;
    };
    const Sub subs[] = {
        {"fixtime", "scaled fixation times along an alpha grid", ExperimentKind::FixTime},
        {"fixprob", "Moran fixation probability against the closed form", ExperimentKind::FixProb},
        {"duality", "moment duality: SDE vs ASG vs truncated oracle", ExperimentKind::Duality},
        {"epidemic", "limit epidemics I and J", ExperimentKind::Epidemic},
        {"figure1", "conditioned Wright-Fisher sweep trajectories", ExperimentKind::Figure1},
        {"lm", "(L,M) process diagnostics", ExperimentKind::LM},
    };
    std::optional<ExperimentKind> chosen;
    for (const auto& s : subs) {
        auto* sub = app.add_subcommand(s.name, s.help);
        const bool is_epi = s.kind == ExperimentKind::Epidemic;
        add_common(sub, common, !is_epi);
        if (is_epi) {
            sub->add_option("--kind", epi.kind, "I or J")->check(CLI::IsMember({"I", "J"}));
            sub->add_option("--graph", epi.graph, "migration JSON {\"d\",\"b\"}");
            auto* g = sub->add_option("--gamma", epi.gamma, "scalar delay exponent in [0,1]");
            auto* gm = sub->add_option("--gamma-matrix", epi.gamma_matrix, "JSON file with a d x d gamma matrix");
            g->excludes(gm);
            sub->add_option("--founder", epi.founder, "founder colony (1-based)")->check(CLI::PositiveNumber);
            sub->add_option("--samples", epi.samples, "number of S_J samples")->check(CLI::PositiveNumber);
        }
        sub->callback([&chosen, k = s.kind] { chosen = k; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitError;
    }
    try {
        return run(*chosen, common, *chosen == ExperimentKind::Epidemic ? &epi : nullptr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}
