#include <doctest.h>

#include <cmath>

#include "sweepsim/epidemics.hpp"
#include "sweepsim/errors.hpp"
#include "sweepsim/replicates.hpp"
#include "sweepsim/stats.hpp"

using namespace sweepsim;

namespace {

// Random strongly connected rate matrix: a directed cycle plus extra edges.
Eigen::MatrixXd random_graph(int d, RngStream& rng) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
    std::vector<int> perm(d);
    for (int i = 0; i < d; ++i) perm[i] = i;
    for (int i = d - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    for (int i = 0; i < d; ++i) a(perm[i], perm[(i + 1) % d]) = 0.5 + rng.uniform();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j && rng.uniform() < 0.25) a(i, j) = 0.5 + rng.uniform();
    return a;
}

// All-pairs shortest paths by Floyd-Warshall.
double floyd_eccentricity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& w, int founder) {
    const int d = static_cast<int>(a.rows());
    Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(d, d, INFINITY);
    for (int i = 0; i < d; ++i) {
        dist(i, i) = 0.0;
        for (int j = 0; j < d; ++j)
            if (i != j && a(i, j) > 0) dist(i, j) = w(i, j);
    }
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) dist(i, j) = std::min(dist(i, j), dist(i, k) + dist(k, j));
    return dist.row(founder).maxCoeff();
}

}  // namespace

TEST_CASE("eccentricity of a directed path and a cycle") {
    Eigen::MatrixXd path = Eigen::MatrixXd::Zero(4, 4);
    path(0, 1) = path(1, 2) = path(2, 3) = 1.0;
    CHECK(eccentricity(infection_graph(path), 0) == 3);
    CHECK_THROWS_AS(eccentricity(infection_graph(path), 2), Unreachable);
    path(3, 0) = 1.0;
    CHECK(eccentricity(infection_graph(path), 2) == 3);
}

TEST_CASE("epidemic I closed form equals the event simulation on random graphs") {
    RngStream rng(77, 0);
    for (int g = 0; g < 10; ++g) {
        const int d = 2 + static_cast<int>(rng.below(5));
        const auto a = random_graph(d, rng);
        const int founder = static_cast<int>(rng.below(d));
        for (double gamma : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const auto times = simulate_epidemic_I(a, Eigen::MatrixXd::Constant(d, d, gamma), founder);
            CHECK(epidemic_I_fixation(a, gamma, founder) == *std::max_element(times.begin(), times.end()));
            CHECK(times[founder] == 0.0);
        }
    }
}

TEST_CASE("matrix gamma: shortest paths agree with Floyd-Warshall and the simulation") {
    RngStream rng(78, 0);
    for (int g = 0; g < 10; ++g) {
        const int d = 2 + static_cast<int>(rng.below(5));
        const auto a = random_graph(d, rng);
        Eigen::MatrixXd gamma(d, d);
        // dyadic entries keep path sums exact in binary
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) gamma(i, j) = static_cast<double>(rng.below(9)) / 8.0;
        const int founder = static_cast<int>(rng.below(d));
        const double s = epidemic_I_fixation(a, gamma, founder);
        const auto times = simulate_epidemic_I(a, gamma, founder);
        CHECK(s == *std::max_element(times.begin(), times.end()));
        CHECK(s == floyd_eccentricity(a, Eigen::MatrixXd::Ones(d, d) - gamma, founder));
    }
}

TEST_CASE("epidemic I edge cases") {
    Eigen::MatrixXd a(2, 2);
    a << 0, 1, 1, 0;
    CHECK(epidemic_I_fixation(a, 1.0, 0) == 0.0);
    CHECK(epidemic_I_fixation(a, 0.5, 1) == 0.5);
    CHECK_THROWS(epidemic_I_fixation(a, 1.5, 0));
    CHECK(epidemic_I_fixation(Eigen::MatrixXd::Zero(1, 1), 0.3, 0) == 0.0);
}

TEST_CASE("epidemic J for two colonies is 2 plus an exponential") {
    Eigen::MatrixXd b(2, 2);
    b << 0, 3, 0.5, 0;
    const auto ms = build_migration(2, b);
    for (int founder : {0, 1}) {
        const double rate = 2.0 * ms.rho(founder) * ms.a(founder, 1 - founder);
        const auto s = run_replicates(10 + founder, 50000, 2, [&](RngStream& rng, std::uint64_t) {
            return epidemic_J_sample(ms, founder, rng);
        });
        for (double v : s) CHECK(v >= 2.0);
        const double ks = ks_one_sample(s, [rate](double x) { return x < 2 ? 0.0 : -std::expm1(-rate * (x - 2)); });
        CHECK(ks < 0.02);
    }
}

TEST_CASE("epidemic J runs record every colony's progress") {
    Eigen::MatrixXd b(3, 3);
    b << 0, 1, 1, 1, 0, 1, 1, 1, 0;
    const auto ms = build_migration(3, b);
    RngStream rng(3, 0);
    const auto run = epidemic_J_run(ms, 2, rng);
    CHECK(run.S >= 2.0);
    double last = 0.0;
    for (const auto& e : run.events) {
        CHECK(e.time >= last);
        last = e.time;
    }
    CHECK(run.S == last);
}

TEST_CASE("theorem-2 limits by regime") {
    const auto pair = MigrationStructure::symmetric_pair(1.0);
    CHECK(theorem2_limit(pair, RegimeSpec::linear(), 0).constant == 2.0);
    CHECK(theorem2_limit(pair, RegimeSpec::power(0.5), 0).constant == 2.5);
    CHECK(theorem2_limit(pair, RegimeSpec::power(0.0), 0).constant == 3.0);
    const auto j = theorem2_limit(pair, RegimeSpec::inverse_log(), 0);
    CHECK(j.stochastic);
    // 1 + S_J with S_J = 2 + Exp(1) has mean 4
    CHECK(j.center(5, 200000) == doctest::Approx(4.0).epsilon(0.01));
    CHECK(theorem2_limit(MigrationStructure::single_colony(), RegimeSpec::power(0.5), 0).constant == 2.0);
}
