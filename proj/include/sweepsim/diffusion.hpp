#pragma once

#include <cstdint>
#include <vector>

#include "sweepsim/model.hpp"
#include "sweepsim/rng.hpp"

namespace sweepsim {

struct DiffusionState {
    Vector x;
    double t = 0.0;
};

struct IntegratorConfig {
    double dt = 1e-3;
    double boundary_tol = 1e-6;
    double fixation_tol = 1e-3;
    bool conditioned = false;
    /// When false the path is integrated to the horizon even after fixation;
    /// the first fixation time is still reported.
    bool stop_on_fixation = true;
    /// Record every n-th step into the trajectory; 0 records nothing.
    std::uint64_t record_every = 0;
    /// Colonies within this distance of 0 or 1 take an exact square-root
    /// (CIR) step with frozen coefficients instead of a clamped Euler step;
    /// clamping overshoots would otherwise bias moments. 0 disables.
    double boundary_layer = 0.1;

    void validate() const;
    /// dt = min(1e-3, 0.1/alpha), default tolerances.
    static IntegratorConfig defaults(double alpha, bool conditioned);
};

enum class DiffusionOutcome { Running, Fixed, Lost, Discarded };

const char* to_string(DiffusionOutcome outcome);

struct DiffusionResult {
    DiffusionOutcome outcome = DiffusionOutcome::Running;
    /// First time all colonies exceeded 1 - fixation_tol; negative if never.
    double t_fix = -1.0;
    DiffusionState final;
    std::uint64_t steps = 0;
    std::vector<double> times;
    std::vector<Vector> path;
};

/// coth(z) for z > 0: series 1/z + z/3 below 1e-4, 1 above 20.
double stable_coth(double z);

/// alpha x_i(1-x_i) + mu sum_j b(i,j)(x_j - x_i).
Vector drift_unconditioned(const Vector& x, const MigrationStructure& ms, const SweepParams& sp);

/// The selection term carries the factor coth(alpha sum_j rho_j x_j).
/// Throws DomainError at x = 0.
Vector drift_conditioned(const Vector& x, const MigrationStructure& ms, const SweepParams& sp);

/// sqrt(x_i(1-x_i)/rho_i), with x clamped into [0,1] first.
Vector diffusion_coefficient(const Vector& x, const MigrationStructure& ms);

/// Euler-Maruyama up to `horizon` with per-step clamping into [0,1]^d.
/// A colony within boundary_tol of a boundary whose drift points outward is
/// snapped onto that boundary. Conditioned paths that reach x = 0 are
/// reported as Discarded.
DiffusionResult integrate(const DiffusionState& init, const MigrationStructure& ms, const SweepParams& sp,
                          const IntegratorConfig& cfg, double horizon, RngStream& rng);

/// Default entrance-law starting frequency 1/(2 alpha), capped at 1/2.
double default_entrance_epsilon(double alpha);

/// Conditioned path started from epsilon e_founder; epsilon <= 0 selects the default.
DiffusionResult entrance_law_sample(int founder, const MigrationStructure& ms, const SweepParams& sp,
                                    IntegratorConfig cfg, double horizon, RngStream& rng, double epsilon = 0.0);

}  // namespace sweepsim
