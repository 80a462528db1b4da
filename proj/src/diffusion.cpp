#include "sweepsim/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "sweepsim/errors.hpp"

namespace sweepsim {

void IntegratorConfig::validate() const {
    if (!(dt > 0.0)) throw DomainError("integrator: dt must be positive");
    if (!(boundary_tol > 0.0 && boundary_tol < fixation_tol && fixation_tol < 1.0))
        throw DomainError("integrator: need 0 < boundary_tol < fixation_tol < 1");
    if (!(boundary_layer >= 0.0 && boundary_layer <= 0.5))
        throw DomainError("integrator: boundary_layer must lie in [0, 0.5]");
}

IntegratorConfig IntegratorConfig::defaults(double alpha, bool conditioned) {
    IntegratorConfig cfg;
    if (alpha > 0.0) cfg.dt = std::min(1e-3, 0.1 / alpha);
    cfg.conditioned = conditioned;
    return cfg;
}

const char* to_string(DiffusionOutcome outcome) {
    switch (outcome) {
        case DiffusionOutcome::Running: return "running";
        case DiffusionOutcome::Fixed: return "fixed";
        case DiffusionOutcome::Lost: return "lost";
        case DiffusionOutcome::Discarded: return "discarded";
    }
    return "unknown";
}

double stable_coth(double z) {
    if (z < 1e-4) return 1.0 / z + z / 3.0;
    if (z > 20.0) return 1.0;
    return 1.0 / std::tanh(z);
}

namespace {

void check_dimension(const Vector& x, const MigrationStructure& ms) {
    if (static_cast<int>(x.size()) != ms.d) throw BadDimension("state vector must have d entries");
}

void add_migration(Vector& out, const Vector& x, const MigrationStructure& ms, double mu) {
    if (mu == 0.0) return;
    for (int i = 0; i < ms.d; ++i) {
        double acc = 0.0;
        for (int j = 0; j < ms.d; ++j)
            if (j != i) acc += ms.b(i, j) * (x[j] - x[i]);
        out[i] += mu * acc;
    }
}

double weighted_mass(const Vector& x, const MigrationStructure& ms) {
    double s = 0.0;
    for (int i = 0; i < ms.d; ++i) s += ms.rho(i) * x[i];
    return s;
}

// Drift without dimension checks, for the integrator's inner loop.
void drift_into(Vector& out, const Vector& x, const MigrationStructure& ms, const SweepParams& sp,
                bool conditioned) {
    double factor = 1.0;
    if (conditioned && sp.alpha > 0.0) {
        const double z = sp.alpha * weighted_mass(x, ms);
        factor = stable_coth(z);
    }
    for (int i = 0; i < ms.d; ++i) {
        double sel = sp.alpha * x[i] * (1.0 - x[i]);
        if (conditioned) {
            // With alpha = 0 the h-transform of neutral drift has factor 1/(sum rho x).
            sel = sp.alpha > 0.0 ? sel * factor : x[i] * (1.0 - x[i]) / weighted_mass(x, ms);
        }
        out[i] = sel;
    }
    add_migration(out, x, ms, sp.mu);
}

// Exact transition over h of du = (a + g u) dt + sqrt(s2 u) dW, u >= 0:
// a scaled noncentral chi-square, drawn as a Poisson mixture of gammas.
double cir_step(double u, double a, double g, double s2, double h, RngStream& rng) {
    const double b = -g;
    const double bh = b * h;
    double k;
    if (std::abs(bh) < 1e-8) k = s2 * h / 4.0;
    else k = s2 * -std::expm1(-bh) / (4.0 * b);
    const double lambda = u > 0.0 ? u * std::exp(-bh) / k : 0.0;
    const double shape = 2.0 * a / s2 + static_cast<double>(rng.poisson(lambda / 2.0));
    return 2.0 * k * rng.gamma(shape);
}

}  // namespace

Vector drift_unconditioned(const Vector& x, const MigrationStructure& ms, const SweepParams& sp) {
    check_dimension(x, ms);
    Vector out(ms.d);
    drift_into(out, x, ms, sp, false);
    return out;
}

Vector drift_conditioned(const Vector& x, const MigrationStructure& ms, const SweepParams& sp) {
    check_dimension(x, ms);
    if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; }))
        throw DomainError("drift_conditioned: undefined at x = 0");
    Vector out(ms.d);
    drift_into(out, x, ms, sp, true);
    return out;
}

Vector diffusion_coefficient(const Vector& x, const MigrationStructure& ms) {
    check_dimension(x, ms);
    Vector out(ms.d);
    for (int i = 0; i < ms.d; ++i) {
        const double xi = std::clamp(x[i], 0.0, 1.0);
        out[i] = std::sqrt(xi * (1.0 - xi) / ms.rho(i));
    }
    return out;
}

DiffusionResult integrate(const DiffusionState& init, const MigrationStructure& ms, const SweepParams& sp,
                          const IntegratorConfig& cfg, double horizon, RngStream& rng) {
    cfg.validate();
    check_dimension(init.x, ms);
    const int d = ms.d;
    DiffusionResult res;
    Vector x = init.x;
    for (double& v : x) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("integrate: initial state outside [0,1]^d");
    }
    double t = init.t;
    auto all_below = [&](double level) {
        return std::all_of(x.begin(), x.end(), [level](double v) { return v < level; });
    };
    auto all_above = [&](double level) {
        return std::all_of(x.begin(), x.end(), [level](double v) { return v > level; });
    };
    auto record = [&] {
        res.times.push_back(t);
        res.path.push_back(x);
    };
    if (cfg.conditioned && all_below(cfg.boundary_tol) && weighted_mass(x, ms) == 0.0)
        throw DomainError("integrate: conditioned start at x = 0");
    if (cfg.record_every > 0) record();

    auto finish = [&](DiffusionOutcome outcome) {
        res.outcome = outcome;
        res.final = {x, t};
        if (cfg.record_every > 0 && (res.times.empty() || res.times.back() != t)) record();
        return res;
    };

    if (all_above(1.0 - cfg.fixation_tol)) {
        res.t_fix = t;
        if (cfg.stop_on_fixation) return finish(DiffusionOutcome::Fixed);
    }

    Vector drift(d), noise(d);
    int large_steps = 0;
    const double end = init.t + horizon;
    while (t < end - 1e-12 * std::max(1.0, std::abs(end))) {
        const double h = std::min(cfg.dt, end - t);
        const double sqrt_h = std::sqrt(h);
        if (cfg.conditioned && weighted_mass(x, ms) == 0.0) return finish(DiffusionOutcome::Discarded);
        drift_into(drift, x, ms, sp, cfg.conditioned);
        double biggest = 0.0;
        for (int i = 0; i < d; ++i) {
            const double xi = x[i];
            const double gap = std::min(xi, 1.0 - xi);
            double inc;
            if (gap < cfg.boundary_layer) {
                // u = gap solves du = (a + g u) dt + sqrt(s2 u) dW locally, with
                // a the drift left at u = 0.
                const bool low = xi <= 0.5;
                const double far = low ? 1.0 - xi : xi;
                const double s2 = far / ms.rho(i);
                const double m = low ? drift[i] : -drift[i];
                double a = 0.0;
                if (sp.mu > 0.0) {
                    for (int j = 0; j < d; ++j)
                        if (j != i) a += ms.b(i, j) * (low ? x[j] : 1.0 - x[j]);
                    a *= sp.mu;
                }
                const double g = gap > 0.0 ? (m - a) / gap : 0.0;
                const double u = cir_step(gap, a, g, s2, h, rng);
                inc = (low ? u : 1.0 - u) - xi;
            } else {
                const double sigma = std::sqrt(xi * (1.0 - xi) / ms.rho(i));
                inc = drift[i] * h + sigma * sqrt_h * rng.normal();
            }
            biggest = std::max(biggest, std::abs(inc));
            noise[i] = inc;
        }
        large_steps = biggest > 0.5 ? large_steps + 1 : 0;
        if (large_steps >= 3) throw StepSizeTooLarge("integrate: increments above 0.5 on consecutive steps");
        for (int i = 0; i < d; ++i) x[i] = std::clamp(x[i] + noise[i], 0.0, 1.0);
        t += h;
        ++res.steps;

        // Local absorption where the deterministic pull holds the colony at the boundary.
        drift_into(drift, x, ms, sp, cfg.conditioned && weighted_mass(x, ms) > 0.0);
        for (int i = 0; i < d; ++i) {
            if (x[i] < cfg.boundary_tol && drift[i] <= 0.0) x[i] = 0.0;
            else if (x[i] > 1.0 - cfg.boundary_tol && drift[i] >= 0.0) x[i] = 1.0;
        }

        if (cfg.record_every > 0 && res.steps % cfg.record_every == 0) record();
        if (res.t_fix < 0.0 && all_above(1.0 - cfg.fixation_tol)) {
            res.t_fix = t;
            if (cfg.stop_on_fixation) return finish(DiffusionOutcome::Fixed);
        }
        if (all_below(cfg.boundary_tol)) {
            if (cfg.conditioned) return finish(DiffusionOutcome::Discarded);
            std::fill(x.begin(), x.end(), 0.0);
            if (cfg.stop_on_fixation) return finish(DiffusionOutcome::Lost);
        }
    }
    if (res.t_fix >= 0.0) return finish(DiffusionOutcome::Fixed);
    if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) return finish(DiffusionOutcome::Lost);
    return finish(DiffusionOutcome::Running);
}

double default_entrance_epsilon(double alpha) {
    return alpha > 1.0 ? 1.0 / (2.0 * alpha) : 0.5;
}

DiffusionResult entrance_law_sample(int founder, const MigrationStructure& ms, const SweepParams& sp,
                                    IntegratorConfig cfg, double horizon, RngStream& rng, double epsilon) {
    if (founder < 0 || founder >= ms.d) throw DomainError("entrance_law_sample: founder outside colony range");
    if (epsilon <= 0.0) epsilon = default_entrance_epsilon(sp.alpha);
    if (epsilon > 1.0) throw DomainError("entrance_law_sample: epsilon above 1");
    cfg.conditioned = true;
    DiffusionState init{Vector(ms.d, 0.0), 0.0};
    init.x[founder] = epsilon;
    return integrate(init, ms, sp, cfg, horizon, rng);
}

}  // namespace sweepsim
