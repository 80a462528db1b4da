#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sweepsim/model.hpp"
#include "sweepsim/rng.hpp"

namespace sweepsim {

/// Directed adjacency {(i,j) : a(i,j) > 0, i != j}.
std::vector<std::vector<int>> infection_graph(const Eigen::MatrixXd& a);

/// Number of breadth-first layers needed to reach every colony from `founder`.
/// Throws Unreachable.
int eccentricity(const std::vector<std::vector<int>>& graph, int founder);

/// (1 - gamma) times the eccentricity of the founder.
double epidemic_I_fixation(const Eigen::MatrixXd& a, double gamma, int founder);

/// Largest shortest-path distance from the founder with edge weights 1 - gamma(i,j).
double epidemic_I_fixation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gamma, int founder);

/// Event-driven run of the deterministic process: an infected colony k
/// infects each j with a(k,j) > 0 after 1 - gamma(k,j). Returns the
/// infection time of every colony.
std::vector<double> simulate_epidemic_I(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gamma, int founder);

struct EpidemicJEvent {
    double time;
    int colony;
    int state;  // new state, 1 or 2
};

struct EpidemicJRun {
    double S = 0.0;
    std::vector<EpidemicJEvent> events;
};

/// Founder enters state 1 at time 0; every colony moves 1 -> 2 exactly one
/// unit after entering 1; a colony j in state 0 enters 1 at rate
/// 2 sum_k rho_k a(k,j) 1{state_k = 2}. S is the time all colonies reach 2.
EpidemicJRun epidemic_J_run(const MigrationStructure& ms, int founder, RngStream& rng);
double epidemic_J_sample(const MigrationStructure& ms, int founder, RngStream& rng);

/// Limit law of alpha T_fix / log alpha in the given regime.
struct Theorem2Limit {
    bool stochastic = false;
    double constant = 0.0;
    MigrationStructure ms;
    int founder = 0;

    /// The constant, or a fresh draw of 1 + S_J.
    double sample(RngStream& rng) const;
    /// The constant, or the mean of `n` draws on stream (seed, 0).
    double center(std::uint64_t seed, std::uint64_t n = 100000) const;
};

Theorem2Limit theorem2_limit(const MigrationStructure& ms, const RegimeSpec& regime, int founder);

}  // namespace sweepsim
