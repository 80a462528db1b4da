#include <doctest.h>

#include <cmath>

#include "sweepsim/asg.hpp"
#include "sweepsim/diffusion.hpp"
#include "sweepsim/errors.hpp"
#include "sweepsim/replicates.hpp"
#include "sweepsim/stats.hpp"

using namespace sweepsim;

TEST_CASE("stable coth agrees with the direct formula and its expansions") {
    for (double z : {1e-8, 1e-5, 1e-3, 0.1, 1.0, 5.0, 19.0, 25.0, 300.0})
        CHECK(stable_coth(z) == doctest::Approx(std::cosh(z) / std::sinh(z)).epsilon(1e-12));
    CHECK(stable_coth(1e-6) * 1e-6 == doctest::Approx(1.0));
}

TEST_CASE("unconditioned drift by hand") {
    const auto ms = MigrationStructure::symmetric_pair(2.0);
    const SweepParams sp{3.0, 0.5, 0};
    const Vector x = {0.25, 0.75};
    const auto m = drift_unconditioned(x, ms, sp);
    CHECK(m[0] == doctest::Approx(3.0 * 0.25 * 0.75 + 0.5 * 2.0 * (0.75 - 0.25)));
    CHECK(m[1] == doctest::Approx(3.0 * 0.75 * 0.25 + 0.5 * 2.0 * (0.25 - 0.75)));
    const auto s = diffusion_coefficient(x, ms);
    CHECK(s[0] == doctest::Approx(std::sqrt(0.25 * 0.75 / 0.5)));
}

TEST_CASE("conditioned drift carries the coth factor and is singular at zero") {
    Eigen::MatrixXd b(2, 2);
    b << 0, 3, 1, 0;
    const auto ms = build_migration(2, b);
    const SweepParams sp{2.0, 1.5, 0};
    const Vector x = {0.1, 0.3};
    const double sum = ms.rho(0) * 0.1 + ms.rho(1) * 0.3;
    const auto c = drift_conditioned(x, ms, sp);
    const auto u = drift_unconditioned(x, ms, sp);
    for (int i = 0; i < 2; ++i) {
        const double sel = 2.0 * x[i] * (1 - x[i]);
        CHECK(c[i] == doctest::Approx(u[i] - sel + sel * std::cosh(2.0 * sum) / std::sinh(2.0 * sum)));
    }
    CHECK_THROWS(drift_conditioned({0.0, 0.0}, ms, sp));
}

TEST_CASE("conditioned drift equals the h-transform drift") {
    // m + sigma^2 grad(log h), with h the fixation probability.
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    const SweepParams sp{1.7, 0.4, 0};
    const Vector x = {0.2, 0.6};
    const auto c = drift_conditioned(x, ms, sp);
    const auto u = drift_unconditioned(x, ms, sp);
    const double h0 = fixation_probability_closed_form(x, ms, sp);
    for (int i = 0; i < 2; ++i) {
        Vector xp = x, xm = x;
        xp[i] += 1e-6;
        xm[i] -= 1e-6;
        const double dlogh = (std::log(fixation_probability_closed_form(xp, ms, sp)) -
                              std::log(fixation_probability_closed_form(xm, ms, sp))) / 2e-6;
        const double var = x[i] * (1 - x[i]) / ms.rho(i);
        CHECK(c[i] == doctest::Approx(u[i] + var * dlogh).epsilon(1e-6));
    }
    CHECK(h0 > 0.0);
}

TEST_CASE("neutral single colony is a martingale through absorption") {
    const auto ms = MigrationStructure::single_colony();
    const SweepParams sp{1e-9, 0.0, 0};
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    const auto finals = run_replicates(17, 20000, 2, [&](RngStream& rng, std::uint64_t) {
        return integrate({{0.3}, 0.0}, ms, sp, cfg, 5.0, rng).final.x[0];
    });
    RunningStats st;
    for (double v : finals) st.add(v);
    CHECK(std::abs(st.mean() - 0.3) < 4.0 * st.std_error());
}

TEST_CASE("fixation is detected and recorded") {
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    const SweepParams sp{20.0, 20.0, 0};
    auto cfg = IntegratorConfig::defaults(sp.alpha, true);
    cfg.record_every = 10;
    RngStream rng(4, 0);
    const auto res = integrate({{0.2, 0.0}, 0.0}, ms, sp, cfg, 100.0, rng);
    CHECK(res.outcome == DiffusionOutcome::Fixed);
    CHECK(res.t_fix > 0.0);
    CHECK(res.t_fix == res.final.t);
    for (double v : res.final.x) CHECK(v >= 1.0 - cfg.fixation_tol);
    CHECK(res.path.size() == res.times.size());
    CHECK(!res.path.empty());
}

TEST_CASE("entrance law samples start near zero and fix") {
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    const SweepParams sp{10.0, 10.0, 1};
    RngStream rng(6, 0);
    const auto res = entrance_law_sample(1, ms, sp, IntegratorConfig::defaults(10.0, true), 100.0, rng);
    CHECK(res.outcome == DiffusionOutcome::Fixed);
    CHECK(default_entrance_epsilon(10.0) == doctest::Approx(0.05));
}

TEST_CASE("integrator configuration is validated") {
    IntegratorConfig cfg;
    cfg.dt = -1.0;
    CHECK_THROWS(cfg.validate());
    CHECK(IntegratorConfig::defaults(1e4, false).dt == doctest::Approx(1e-5));
    CHECK(std::string(to_string(DiffusionOutcome::Discarded)) == "discarded");
}
