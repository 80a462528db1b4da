#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "sweepsim/diffusion.hpp"
#include "sweepsim/model.hpp"
#include "sweepsim/rng.hpp"
#include "sweepsim/stats.hpp"

namespace sweepsim {

enum class AsgDirection { Backward_b, Reversed_a };

enum class AsgEventKind { None, Coalescence, Branching, Migration };

const char* to_string(AsgEventKind kind);

/// One logged event. Every child is connected to every parent.
struct AsgEvent {
    AsgEventKind kind = AsgEventKind::None;
    double time = 0.0;
    int from = 0;
    int to = 0;
    std::uint64_t parents[2] = {0, 0};
    std::uint64_t children[2] = {0, 0};
    std::uint8_t n_parents = 0;
    std::uint8_t n_children = 0;
};

struct Particle {
    std::uint64_t label = 0;
    /// Bit set of origin groups; OR-ed on coalescence, inherited otherwise.
    std::uint8_t tag = 0;
};

/// Labeled particle system. Labels are consecutive counters, never reused.
struct ParticleSystemState {
    std::vector<std::vector<Particle>> colonies;
    std::vector<std::vector<std::uint64_t>> initial;  // time-0 labels per colony
    std::vector<AsgEvent> ancestry;
    bool log_ancestry = true;
    double time = 0.0;
    std::uint64_t next_label = 0;

    int d() const noexcept { return static_cast<int>(colonies.size()); }
    Counts counts() const;
    std::int64_t total() const noexcept;
};

ParticleSystemState make_particle_system(const Counts& counts, bool log_ancestry = true, std::uint8_t tag = 0);

/// Appends particles with the given tag; they count as time-0 particles.
void add_particles(ParticleSystemState& state, const Counts& counts, std::uint8_t tag);

/// Rates of the counts process. Order: per colony i ascending, coalescence,
/// branching, then migration to j ascending.
struct AsgRate {
    AsgEventKind kind;
    int from;
    int to;
    double rate;
};
std::vector<AsgRate> asg_category_rates(const Counts& counts, const MigrationStructure& ms, const SweepParams& sp,
                                        AsgDirection dir);
double asg_total_rate(const Counts& counts, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir);

struct AsgStepResult {
    AsgEventKind kind = AsgEventKind::None;
    int from = 0;
    int to = 0;
    double holding = 0.0;  // infinite for None
};

/// One Gillespie event on the labeled system. Throws EmptyConfiguration.
AsgStepResult asg_step(ParticleSystemState& state, const MigrationStructure& ms, const SweepParams& sp,
                       AsgDirection dir, RngStream& rng);

/// Runs until `horizon` (absolute time); the state time ends exactly there.
void asg_run_until(ParticleSystemState& state, const MigrationStructure& ms, const SweepParams& sp,
                   AsgDirection dir, double horizon, RngStream& rng);

/// Counts-only process with the same rates; returns the event kind.
AsgStepResult counts_step(Counts& counts, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir,
                          RngStream& rng);
Counts counts_run_for(Counts counts, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir,
                      double duration, RngStream& rng);

/// Independent Poisson(2 alpha rho_i); optionally rejection-sampled away from 0.
Counts sample_equilibrium(const MigrationStructure& ms, const SweepParams& sp, bool conditioned_nonzero,
                          RngStream& rng);

/// Equilibrium probability of a nonzero configuration.
double equilibrium_pmf(const Counts& k, const MigrationStructure& ms, const SweepParams& sp);

/// All nonzero configurations with total <= k_max, in lexicographic order.
std::vector<Counts> enumerate_configurations(int d, std::int64_t k_max);

/// Max over transitions k -> l within total <= k_max of
/// |pi_k q^b(k,l) - pi_l q^a(l,k)| / max(pi_k q^b(k,l), pi_l q^a(l,k)).
double detailed_balance_check(const MigrationStructure& ms, const SweepParams& sp, std::int64_t k_max);

struct MarkingResult {
    std::vector<std::uint64_t> marked_at_tau;
    std::vector<std::uint64_t> connected_at_0;
    Vector frequencies;
};

/// Marks each current particle in colony i with probability x_i.
MarkingResult mark_and_percolate(const ParticleSystemState& state, const Vector& x, RngStream& rng);
/// Same, with one uniform per current particle (colony-major order); a
/// particle in colony i is marked iff its uniform is below x_i.
MarkingResult mark_and_percolate(const ParticleSystemState& state, const Vector& x, const Vector& uniforms);

/// Time-0 particles connected to the given set of current labels.
std::vector<std::uint64_t> percolate(const ParticleSystemState& state, const std::vector<std::uint64_t>& marked);

/// prod_i base_i^{k_i}.
double dual_power(const Vector& base, const Counts& k);

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t replicates = 0;
};

/// E_x[(1 - X(tau))^k] by unconditioned Euler-Maruyama.
MonteCarloEstimate duality_lhs(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                               const SweepParams& sp, IntegratorConfig cfg, std::uint64_t replicates,
                               std::uint64_t seed, unsigned threads = 1);

/// E[(1 - x)^{K_tau}] with K started at k.
MonteCarloEstimate duality_rhs(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                               const SweepParams& sp, std::uint64_t replicates, std::uint64_t seed,
                               unsigned threads = 1);

struct DualityReport {
    MonteCarloEstimate lhs;
    MonteCarloEstimate rhs;
    /// Combined standard error sqrt(se_l^2 + se_r^2).
    double combined_se = 0.0;
};

/// Independent streams: lhs on `seed`, rhs on mix64(seed).
DualityReport duality_lhs_vs_rhs(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                                 const SweepParams& sp, const IntegratorConfig& cfg, std::uint64_t replicates,
                                 std::uint64_t seed, unsigned threads = 1);

struct TruncatedMoment {
    double value = 0.0;          // lower bound, exact up to overflow_mass
    double overflow_mass = 0.0;  // probability of leaving total <= k_max before tau
    std::int64_t k_max = 0;
    std::size_t states = 0;
};

/// E[(1 - x)^{K_tau}] by uniformization on {total <= k_max} plus an
/// absorbing overflow state. Throws TruncationError if the overflow mass
/// reaches `tolerance`.
TruncatedMoment truncated_dual_moment(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                                      const SweepParams& sp, std::int64_t k_max, double tolerance = 1e-6);

/// Increases k_max until the overflow mass drops below `tolerance`.
TruncatedMoment truncated_dual_moment_auto(const Counts& k, const Vector& x, double tau,
                                           const MigrationStructure& ms, const SweepParams& sp,
                                           double tolerance = 1e-6, std::int64_t k_limit = 160);

/// (1 - exp(-2 alpha sum rho x)) / (1 - exp(-2 alpha)); the alpha -> 0 limit is sum rho x.
double fixation_probability_closed_form(const Vector& x, const MigrationStructure& ms, const SweepParams& sp);

/// 1 - E[(1 - x)^Psi] by explicit summation of the Poisson series.
double fixation_probability_series(const Vector& x, const MigrationStructure& ms, const SweepParams& sp);

constexpr std::uint8_t kTagY = 1;
constexpr std::uint8_t kTagZ = 2;

struct YZIndicators {
    bool z_unmarked = false;
    bool y_marked = false;
};

/// Y_0 ~ Poisson(2 alpha rho), Z_0 = k, joint D^b dynamics for time tau,
/// independent marking at tau with probabilities x.
YZIndicators coupled_yz_run(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                            const SweepParams& sp, RngStream& rng);

/// Small-marking limit at colony `founder`: returns (#Y_tau in founder,
/// #Y_tau in founder not connected to Z_0). The ratio of their sums
/// estimates the conditioned moment under the entrance law from founder.
struct YZWeights {
    double weight = 0.0;
    double z_free = 0.0;
};
YZWeights coupled_yz_small_marking(const Counts& k, int founder, double tau, const MigrationStructure& ms,
                                   const SweepParams& sp, RngStream& rng);

struct ConditionedEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t accepted = 0;
    std::uint64_t attempted = 0;
};

/// P(Z_tau free of marks | Y_tau marked) from exactly `accepted` accepted
/// replicates; replicate ids run 0, 1, ... until the target is reached.
ConditionedEstimate conditioned_duality_estimate(const Counts& k, const Vector& x, double tau,
                                                 const MigrationStructure& ms, const SweepParams& sp,
                                                 std::uint64_t accepted, std::uint64_t seed, unsigned threads = 1,
                                                 std::uint64_t max_attempts = 100000000);

/// Ratio estimator over `replicates` small-marking runs.
ConditionedEstimate conditioned_duality_small_marking(const Counts& k, int founder, double tau,
                                                      const MigrationStructure& ms, const SweepParams& sp,
                                                      std::uint64_t replicates, std::uint64_t seed,
                                                      unsigned threads = 1);

/// E[(1 - X*(tau))^k] from the conditioned SDE started at x; Discarded runs
/// are dropped and counted in `attempted - accepted`.
ConditionedEstimate conditioned_sde_moment(const Counts& k, const Vector& x, double tau,
                                           const MigrationStructure& ms, const SweepParams& sp,
                                           IntegratorConfig cfg, std::uint64_t replicates, std::uint64_t seed,
                                           unsigned threads = 1);

}  // namespace sweepsim
