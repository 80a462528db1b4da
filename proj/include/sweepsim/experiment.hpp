#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sweepsim/model.hpp"

namespace sweepsim {

/// Experiment kinds, one per CLI subcommand.
enum class ExperimentKind { FixTime, FixProb, Duality, Epidemic, Figure1, LM };

ExperimentKind kind_from_string(const std::string& name);
const char* to_string(ExperimentKind kind);

struct Overrides {
    std::optional<double> dt;
    std::optional<double> epsilon;
    std::optional<double> tolerance;
    std::optional<double> ks_tolerance;
    std::optional<double> truncation_tolerance;
    std::optional<std::uint64_t> n_init;
    std::optional<std::uint64_t> limit_samples;
    std::optional<std::uint64_t> max_events;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::FixTime;
    MigrationStructure ms = MigrationStructure::single_colony();
    std::vector<double> alpha_grid;
    RegimeSpec regime;
    std::uint64_t replicates = 1000;
    std::uint64_t seed = 0;
    std::string output_dir = ".";
    int founder = 0;  // 0-based; 1-based in JSON
    unsigned threads = 1;
    Overrides overrides;
    /// Kind-specific section ("fixprob", "duality", ...), validated by the runner.
    nlohmann::json section = nlohmann::json::object();

    /// Everything that influences results, in a fixed key order.
    nlohmann::json canonical() const;
};

/// Parses a config document. Unknown keys, a missing seed, or a
/// non-increasing alpha grid raise ConfigError naming the field.
/// `migration_file` entries resolve relative to `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, ExperimentKind kind, const std::string& base_dir = ".");

nlohmann::json read_json_file(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
/// 16 lowercase hex digits of FNV-1a over canonical().dump().
std::string config_hash(const ExperimentConfig& cfg);

/// Version string baked in at configure time.
const char* sweepsim_version() noexcept;

struct ExperimentReport {
    ExperimentKind kind = ExperimentKind::FixTime;
    bool pass = true;
    std::vector<std::string> failures;
    nlohmann::json summary = nlohmann::json::object();
    /// Output files: name -> contents. CSV files start with the schema line.
    std::map<std::string, std::string> files;
};

/// Shortest round-trip decimal for doubles; "inf"/"nan" spelled out.
std::string format_number(double v);

/// Accumulates CSV text under the `# sweepsim-csv v1` header.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& columns);
    CsvWriter& cell(const std::string& s);
    CsvWriter& cell(double v);
    CsvWriter& cell(std::uint64_t v);
    CsvWriter& cell(std::int64_t v);
    CsvWriter& cell(int v) { return cell(static_cast<std::int64_t>(v)); }
    void end_row();
    const std::string& str() const noexcept { return text_; }

private:
    std::string text_;
    std::size_t columns_;
    std::size_t pending_ = 0;
};

ExperimentReport run_regime_experiment(const ExperimentConfig& cfg);
ExperimentReport run_lm_experiment(const ExperimentConfig& cfg);
ExperimentReport run_fixprob_experiment(const ExperimentConfig& cfg);
ExperimentReport run_duality_experiment(const ExperimentConfig& cfg);
ExperimentReport run_epidemic_experiment(const ExperimentConfig& cfg);
ExperimentReport run_figure1(const ExperimentConfig& cfg);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Writes every file of the report plus `<kind>_report.json` into `dir`.
void write_report(const ExperimentReport& report, const ExperimentConfig& cfg, const std::string& dir);

/// The JSON written as `<kind>_report.json`.
nlohmann::json report_document(const ExperimentReport& report, const ExperimentConfig& cfg);

}  // namespace sweepsim
