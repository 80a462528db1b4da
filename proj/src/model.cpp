#include "sweepsim/model.hpp"

#include <cmath>
#include <queue>
#include <sstream>

#include "sweepsim/errors.hpp"

namespace sweepsim {

namespace {

std::vector<bool> reachable(const Eigen::MatrixXd& rates, int start, bool transpose) {
    const auto d = static_cast<int>(rates.rows());
    std::vector<bool> seen(d, false);
    std::queue<int> frontier;
    seen[start] = true;
    frontier.push(start);
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop();
        for (int j = 0; j < d; ++j) {
            if (i == j || seen[j]) continue;
            const double r = transpose ? rates(j, i) : rates(i, j);
            if (r > 0.0) {
                seen[j] = true;
                frontier.push(j);
            }
        }
    }
    return seen;
}

Eigen::MatrixXd generator_of(const Eigen::MatrixXd& rates) {
    Eigen::MatrixXd q = rates;
    for (int i = 0; i < q.rows(); ++i) {
        q(i, i) = 0.0;
        q(i, i) = -q.row(i).sum();
    }
    return q;
}

}  // namespace

bool strongly_connected(const Eigen::MatrixXd& rates) {
    if (rates.rows() == 0) return false;
    for (bool v : reachable(rates, 0, false))
        if (!v) return false;
    for (bool v : reachable(rates, 0, true))
        if (!v) return false;
    return true;
}

double stationarity_residual(const Eigen::MatrixXd& rates, const Eigen::VectorXd& rho) {
    const Eigen::VectorXd flow = generator_of(rates).transpose() * rho;
    return flow.cwiseAbs().maxCoeff();
}

double flux_residual(const MigrationStructure& ms) {
    double worst = 0.0;
    for (int i = 0; i < ms.d; ++i)
        for (int j = 0; j < ms.d; ++j)
            if (i != j)
                worst = std::max(worst, std::abs(ms.rho(i) * ms.a(i, j) - ms.rho(j) * ms.b(j, i)));
    return worst;
}

MigrationStructure build_migration(int d, const Eigen::MatrixXd& b) {
    if (d < 2) throw BadDimension("build_migration: need d >= 2 colonies, got " + std::to_string(d));
    if (b.rows() != d || b.cols() != d) {
        std::ostringstream msg;
        msg << "build_migration: b is " << b.rows() << "x" << b.cols() << ", expected " << d << "x" << d;
        throw BadDimension(msg.str());
    }
    MigrationStructure ms;
    ms.d = d;
    ms.b = b;
    for (int i = 0; i < d; ++i) {
        ms.b(i, i) = 0.0;
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            if (!std::isfinite(b(i, j)) || b(i, j) < 0.0) {
                std::ostringstream msg;
                msg << "build_migration: b(" << i + 1 << "," << j + 1 << ") = " << b(i, j)
                    << " is not a finite nonnegative rate";
                throw DomainError(msg.str());
            }
        }
    }
    if (!strongly_connected(ms.b))
        throw NotIrreducible("build_migration: backward rates are not irreducible");

    // rho^T Q = 0 together with sum(rho) = 1, solved as one (d+1) x d system.
    Eigen::MatrixXd system(d + 1, d);
    system.topRows(d) = generator_of(ms.b).transpose();
    system.row(d).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
    rhs(d) = 1.0;
    ms.rho = system.colPivHouseholderQr().solve(rhs);
    ms.rho /= ms.rho.sum();

    ms.a = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) ms.a(i, j) = ms.rho(j) / ms.rho(i) * ms.b(j, i);
    return ms;
}

MigrationStructure MigrationStructure::single_colony() {
    MigrationStructure ms;
    ms.d = 1;
    ms.b = Eigen::MatrixXd::Zero(1, 1);
    ms.a = Eigen::MatrixXd::Zero(1, 1);
    ms.rho = Eigen::VectorXd::Ones(1);
    return ms;
}

MigrationStructure MigrationStructure::symmetric_pair(double rate) {
    Eigen::MatrixXd b(2, 2);
    b << 0.0, rate, rate, 0.0;
    return build_migration(2, b);
}

MigrationStructure migration_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("migration: expected a JSON object");
    for (const auto& [key, _] : doc.items())
        if (key != "d" && key != "b") throw ConfigError("migration: unknown key \"" + key + "\"");
    if (!doc.contains("d") || !doc["d"].is_number_integer())
        throw ConfigError("migration: \"d\" must be an integer");
    const int d = doc["d"].get<int>();
    if (d == 1 && !doc.contains("b")) return MigrationStructure::single_colony();
    if (!doc.contains("b") || !doc["b"].is_array()) throw ConfigError("migration: \"b\" must be an array of rows");
    const auto& rows = doc["b"];
    if (static_cast<int>(rows.size()) != d)
        throw BadDimension("migration: b has " + std::to_string(rows.size()) + " rows, expected " +
                           std::to_string(d));
    if (d == 1) return MigrationStructure::single_colony();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        const auto& row = rows[i];
        if (!row.is_array() || static_cast<int>(row.size()) != d)
            throw BadDimension("migration: row " + std::to_string(i + 1) + " must have " + std::to_string(d) +
                               " entries");
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            if (!row[j].is_number()) {
                throw ConfigError("migration: b(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                  ") is not a number");
            }
            const double v = row[j].get<double>();
            if (v < 0.0 || !std::isfinite(v)) {
                throw DomainError("migration: b(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                  ") = " + std::to_string(v) + " must be a finite nonnegative rate");
            }
            b(i, j) = v;
        }
    }
    return build_migration(d, b);
}

nlohmann::json migration_to_json(const MigrationStructure& ms) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < ms.d; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < ms.d; ++j) row.push_back(ms.b(i, j));
        rows.push_back(row);
    }
    return {{"d", ms.d}, {"b", rows}};
}

void SweepParams::validate(int d) const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("alpha must be positive and finite");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("mu must be nonnegative and finite");
    if (founder < 0 || founder >= d)
        throw DomainError("founder colony " + std::to_string(founder + 1) + " outside 1.." + std::to_string(d));
}

void RegimeSpec::validate() const {
    if (!(c > 0.0)) throw DomainError("regime constant c must be positive");
    if (kind == Kind::PowerGamma && !(gamma >= 0.0 && gamma <= 1.0))
        throw DomainError("regime exponent gamma must lie in [0, 1]");
}

std::string RegimeSpec::label() const {
    std::ostringstream out;
    switch (kind) {
    case Kind::LinearAlpha:
        out << "linear";
        if (c != 1.0) out << ":c=" << c;
        break;
    case Kind::PowerGamma:
        out << "gamma=" << gamma;
        if (c != 1.0) out << ":c=" << c;
        break;
    case Kind::InverseLog:
        out << "invlog";
        break;
    }
    return out.str();
}

double resolve_regime(const RegimeSpec& spec, double alpha) {
    spec.validate();
    if (!(alpha > 0.0)) throw DomainError("resolve_regime: alpha must be positive");
    switch (spec.kind) {
    case RegimeSpec::Kind::LinearAlpha:
        return spec.c * alpha;
    case RegimeSpec::Kind::PowerGamma:
        return spec.c * std::pow(alpha, spec.gamma);
    case RegimeSpec::Kind::InverseLog:
        if (alpha <= 1.0) throw DomainError("resolve_regime: inverse-log regime needs alpha > 1");
        return 1.0 / std::log(alpha);
    }
    return 0.0;
}

RegimeSpec regime_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string())
        throw ConfigError("regime: expected {\"kind\": \"linear\"|\"power\"|\"invlog\", ...}");
    for (const auto& [key, _] : doc.items())
        if (key != "kind" && key != "c" && key != "gamma") throw ConfigError("regime: unknown key \"" + key + "\"");
    const auto kind = doc["kind"].get<std::string>();
    RegimeSpec spec;
    if (kind == "linear") {
        spec = RegimeSpec::linear(doc.value("c", 1.0));
    } else if (kind == "power") {
        if (!doc.contains("gamma")) throw ConfigError("regime: \"power\" requires \"gamma\"");
        spec = RegimeSpec::power(doc["gamma"].get<double>(), doc.value("c", 1.0));
    } else if (kind == "invlog") {
        spec = RegimeSpec::inverse_log();
    } else {
        throw ConfigError("regime: unknown kind \"" + kind + "\"");
    }
    spec.validate();
    return spec;
}

nlohmann::json regime_to_json(const RegimeSpec& spec) {
    switch (spec.kind) {
    case RegimeSpec::Kind::LinearAlpha:
        return {{"kind", "linear"}, {"c", spec.c}};
    case RegimeSpec::Kind::PowerGamma:
        return {{"kind", "power"}, {"c", spec.c}, {"gamma", spec.gamma}};
    case RegimeSpec::Kind::InverseLog:
        return {{"kind", "invlog"}};
    }
    return {};
}

}  // namespace sweepsim
