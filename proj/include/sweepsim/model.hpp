#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace sweepsim {

using Vector = std::vector<double>;
using Counts = std::vector<std::int64_t>;

/// Migration between d colonies. `b` holds the backward (lineage) rates,
/// `a` the forward (gene-flow) rates, and `rho` the relative colony sizes,
/// which are the stationary weights of `b`. Both matrices have zero diagonals.
struct MigrationStructure {
    int d = 0;
    Eigen::MatrixXd b;
    Eigen::MatrixXd a;
    Eigen::VectorXd rho;

    /// The degenerate unstructured population (d = 1, rho = 1, no migration).
    static MigrationStructure single_colony();

    /// Two colonies with b(1,2) = b(2,1) = rate and equal sizes.
    static MigrationStructure symmetric_pair(double rate = 1.0);
};

/// Builds a migration structure from backward rates; the diagonal of `b` is
/// ignored. Throws BadDimension, NotIrreducible or DomainError.
MigrationStructure build_migration(int d, const Eigen::MatrixXd& b);

/// Max-norm residual of sum_{i != j} rho_i r(i,j) - rho_j sum_{i != j} r(j,i).
double stationarity_residual(const Eigen::MatrixXd& rates, const Eigen::VectorXd& rho);

/// Max over i != j of |rho_i a(i,j) - rho_j b(j,i)|.
double flux_residual(const MigrationStructure& ms);

/// True when the directed graph {(i,j) : rates(i,j) > 0} is strongly connected.
bool strongly_connected(const Eigen::MatrixXd& rates);

/// Parses {"d": int, "b": [[...]]}. Errors name the offending row/column.
MigrationStructure migration_from_json(const nlohmann::json& doc);
nlohmann::json migration_to_json(const MigrationStructure& ms);

/// Selection and migration coefficients plus the founder colony (0-based).
struct SweepParams {
    double alpha = 1.0;
    double mu = 0.0;
    int founder = 0;

    void validate(int d) const;
};

/// How the migration coefficient scales with the selection coefficient.
struct RegimeSpec {
    enum class Kind { LinearAlpha, PowerGamma, InverseLog };

    Kind kind = Kind::LinearAlpha;
    double c = 1.0;
    double gamma = 1.0;

    static RegimeSpec linear(double c = 1.0) { return {Kind::LinearAlpha, c, 1.0}; }
    static RegimeSpec power(double gamma, double c = 1.0) { return {Kind::PowerGamma, c, gamma}; }
    static RegimeSpec inverse_log() { return {Kind::InverseLog, 1.0, 0.0}; }

    void validate() const;
    /// Short label used in CSV output, e.g. "linear", "gamma=0.5", "invlog".
    std::string label() const;
};

double resolve_regime(const RegimeSpec& spec, double alpha);

RegimeSpec regime_from_json(const nlohmann::json& doc);
nlohmann::json regime_to_json(const RegimeSpec& spec);

}  // namespace sweepsim
