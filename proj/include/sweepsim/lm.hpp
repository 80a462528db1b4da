#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "sweepsim/model.hpp"
#include "sweepsim/rng.hpp"

namespace sweepsim {

/// All particles (l) and marked particles (m) per colony.
struct LMState {
    Counts l;
    Counts m;
    double t = 0.0;

    bool absorbed() const noexcept { return l == m; }
};

/// l = Pi + e_founder with Pi_i ~ Poisson(2 alpha rho_i); m = e_founder.
LMState lm_init(const MigrationStructure& ms, const SweepParams& sp, RngStream& rng);

enum class LMCategory { MarkedBirth, UnmarkedBirth, MarkedDeath, UnmarkedDeath, MarkedMigration, UnmarkedMigration };

const char* to_string(LMCategory c);

struct LMRate {
    LMCategory category;
    int from;
    int to;
    double rate;
};

/// Rates in sampling order: per colony i ascending, the six categories in
/// table order, migration categories expanded over j ascending.
std::vector<LMRate> lm_category_rates(const LMState& state, const MigrationStructure& ms, const SweepParams& sp);

/// Applies one event; throws AbsorbedState when m = l.
LMRate lm_step(LMState& state, const MigrationStructure& ms, const SweepParams& sp, RngStream& rng);

struct LMOptions {
    std::uint64_t max_events = 100000000;
    /// Track sup_t |l_i(t)/alpha - 2 rho_i| for t <= 2 log(alpha)/alpha.
    bool track_concentration = false;
};

struct LMResult {
    double T = 0.0;
    double scaled = 0.0;  // alpha T / log alpha
    /// First time a marked particle sits outside the founder colony; infinity if never.
    double first_migrant_time = std::numeric_limits<double>::infinity();
    std::uint64_t events = 0;
    double max_concentration_dev = 0.0;
};

/// Runs lm_init and lm_step to T = inf{t : m = l}. Requires alpha > 1.
LMResult lm_hitting_time(const MigrationStructure& ms, const SweepParams& sp, RngStream& rng,
                         const LMOptions& opts = {});

/// First-migrant time only; the run stops there or at absorption.
double first_successful_migrant_time(const MigrationStructure& ms, const SweepParams& sp, RngStream& rng,
                                     std::uint64_t max_events = 100000000);

/// Extinction time of the scalar birth-death chain with births alpha k and
/// deaths 2 alpha k, started at floor(z alpha).
double birth_death_extinction_time(double alpha, double z, RngStream& rng);

}  // namespace sweepsim
