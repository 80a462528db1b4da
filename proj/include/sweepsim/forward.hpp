#pragma once

#include <cstdint>
#include <vector>

#include "sweepsim/model.hpp"
#include "sweepsim/rng.hpp"
#include "sweepsim/stats.hpp"

namespace sweepsim {

/// Structured two-type Moran model in diffusion time units. Colony i holds
/// capacity[i] individuals, of which counts[i] carry the beneficial type.
struct MoranState {
    std::int64_t N = 0;
    std::vector<std::int64_t> capacity;
    std::vector<std::int64_t> counts;
    double time = 0.0;

    bool all_zero() const noexcept;
    bool all_full() const noexcept;
    bool absorbed() const noexcept { return all_zero() || all_full(); }
    /// Per-colony beneficial frequencies counts[i] / capacity[i].
    Vector frequencies() const;
};

/// capacity[i] = round(rho_i N) with a largest-remainder correction so that
/// the capacities sum to N exactly. Ties go to the lower colony index.
std::vector<std::int64_t> colony_capacities(const MigrationStructure& ms, std::int64_t N);

MoranState make_moran_state(const MigrationStructure& ms, std::int64_t N, const std::vector<std::int64_t>& counts);
/// counts[i] = round(x_i capacity[i]).
MoranState moran_state_from_frequencies(const MigrationStructure& ms, std::int64_t N, const Vector& x);

enum class MoranEvent { Resampling, Selection, Migration };

/// Applies one state-changing event. Rates are aggregated per colony:
/// resampling at 1/rho_i per pair, selection at alpha per beneficial line,
/// forward migration at mu a(i,j) per line. Events that would leave the
/// configuration unchanged are thinned out; the holding time uses the total
/// rate of the remaining ones. Throws AbsorbedState on absorbed input.
MoranEvent moran_step(MoranState& state, const MigrationStructure& ms, const SweepParams& sp, RngStream& rng);

struct AbsorptionOutcome {
    bool fixed = false;
    double time = 0.0;
    std::uint64_t events = 0;
};

/// Runs to absorption at all-zero (lost) or all-full (fixed).
AbsorptionOutcome moran_fixation_run(MoranState state, const MigrationStructure& ms, const SweepParams& sp,
                                     RngStream& rng);

/// Fraction of replicates that fix, with binomial standard error. Replicate
/// r runs on stream (seed, r).
Proportion estimate_fixation_probability(const MoranState& init, const MigrationStructure& ms,
                                         const SweepParams& sp, std::uint64_t replicates, std::uint64_t seed,
                                         unsigned threads = 1);

/// Discrete-generation Wright-Fisher model; N individuals per colony.
struct WrightFisherState {
    std::int64_t N = 0;
    double s = 0.0;
    double m = 0.0;
    Vector freq;
    std::int64_t generation = 0;

    bool fixed() const noexcept;
    bool lost() const noexcept;
};

/// Selection w(x) = x(1+s)/(1+sx), then migration with probability m along
/// the row-normalized forward kernel a, then binomial sampling.
void wf_generation(WrightFisherState& state, const MigrationStructure& ms, RngStream& rng);

/// Expected post-selection, post-migration frequencies feeding the binomial draw.
Vector wf_expected_frequencies(const WrightFisherState& state, const MigrationStructure& ms);

struct WrightFisherTrajectory {
    std::vector<std::int64_t> generation;
    std::vector<Vector> freq;
    std::uint64_t attempts = 0;
};

/// Starts from a single beneficial individual in colony `founder` and
/// resamples until a run fixes (rejection sampling on fixation).
WrightFisherTrajectory wf_conditioned_sweep(const MigrationStructure& ms, std::int64_t N, double s, double m,
                                            int founder, RngStream& rng, std::uint64_t max_attempts = 1000000);

}  // namespace sweepsim
