#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sweepsim/errors.hpp"
#include "sweepsim/forward.hpp"
#include "sweepsim/replicates.hpp"

using namespace sweepsim;

namespace {

MigrationStructure three_colonies() {
    Eigen::MatrixXd b(3, 3);
    b << 0, 2, 0.5, 1, 0, 3, 0.25, 0.75, 0;
    return build_migration(3, b);
}

}  // namespace

TEST_CASE("colony capacities sum to N and follow rho") {
    const auto ms = three_colonies();
    for (std::int64_t N : {10, 11, 999, 1000, 12345}) {
        const auto cap = colony_capacities(ms, N);
        CHECK(std::accumulate(cap.begin(), cap.end(), std::int64_t{0}) == N);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(cap[i] - ms.rho(i) * N) < 1.0);
    }
    CHECK_THROWS(colony_capacities(ms, 2));
}

TEST_CASE("moran steps keep counts inside capacities and reject absorbed states") {
    const auto ms = three_colonies();
    const SweepParams sp{3.0, 2.0, 0};
    RngStream rng(5, 0);
    auto st = make_moran_state(ms, 60, {1, 0, 0});
    int steps = 0;
    while (!st.absorbed() && steps < 100000) {
        moran_step(st, ms, sp, rng);
        for (int i = 0; i < 3; ++i) {
            CHECK(st.counts[i] >= 0);
            CHECK(st.counts[i] <= st.capacity[i]);
        }
        ++steps;
    }
    REQUIRE(st.absorbed());
    CHECK_THROWS_AS(moran_step(st, ms, sp, rng), AbsorbedState);
}

TEST_CASE("single-colony Moran fixation matches gambler's ruin") {
    // Up/down ratio per step is 1 + 2 alpha / N, independent of k.
    const std::int64_t N = 20;
    const double alpha = 2.0;
    const std::int64_t k0 = 3;
    const double r = 1.0 / (1.0 + 2.0 * alpha / N);
    const double exact = (1.0 - std::pow(r, k0)) / (1.0 - std::pow(r, N));
    const auto ms = MigrationStructure::single_colony();
    const auto init = make_moran_state(ms, N, {k0});
    const auto p = estimate_fixation_probability(init, ms, {alpha, 0.0, 0}, 40000, 11);
    CHECK(std::abs(p.p_hat - exact) < 4.0 * std::sqrt(exact * (1 - exact) / 40000));
}

TEST_CASE("neutral structured Moran fixation is the rho-weighted frequency") {
    // Without selection sum rho_i x_i is a martingale.
    const auto ms = three_colonies();
    const auto init = moran_state_from_frequencies(ms, 40, {0.5, 0.0, 1.0});
    const auto x = init.frequencies();
    double target = 0.0;
    for (int i = 0; i < 3; ++i) target += ms.rho(i) * x[i];
    const auto p = estimate_fixation_probability(init, ms, {0.0, 1.5, 0}, 20000, 3, 2);
    CHECK(std::abs(p.p_hat - target) < 4.0 * std::sqrt(target * (1 - target) / 20000));
}

TEST_CASE("fixation runs report consistent outcomes and times") {
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    const auto init = make_moran_state(ms, 50, {5, 0});
    RngStream rng(2, 0);
    const auto out = moran_fixation_run(init, ms, {2.0, 1.0, 0}, rng);
    CHECK(out.time > 0.0);
    CHECK(out.events > 0);
}

TEST_CASE("Wright-Fisher expected frequencies") {
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    WrightFisherState st{1000, 0.1, 0.0, {0.2, 0.0}, 0};
    auto e = wf_expected_frequencies(st, ms);
    CHECK(e[0] == doctest::Approx(0.2 * 1.1 / (1 + 0.1 * 0.2)));
    CHECK(e[1] == 0.0);
    st.m = 0.5;
    e = wf_expected_frequencies(st, ms);
    const double w = 0.2 * 1.1 / 1.02;
    CHECK(e[0] == doctest::Approx(0.5 * w));
    CHECK(e[1] == doctest::Approx(0.5 * w));
}

TEST_CASE("conditioned Wright-Fisher sweeps end with every colony fixed") {
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    RngStream rng(8, 0);
    const auto tr = wf_conditioned_sweep(ms, 200, 0.1, 0.01, 0, rng);
    REQUIRE(tr.freq.size() == tr.generation.size());
    CHECK(tr.freq.front()[0] == doctest::Approx(1.0 / 200));
    CHECK(tr.freq.front()[1] == 0.0);
    for (double f : tr.freq.back()) CHECK(f == 1.0);
    for (std::size_t g = 1; g < tr.generation.size(); ++g) CHECK(tr.generation[g] == tr.generation[g - 1] + 1);
    CHECK(tr.attempts >= 1);
}

TEST_CASE("conditioned Wright-Fisher gives up after its budget") {
    const auto ms = MigrationStructure::symmetric_pair(1.0);
    RngStream rng(8, 0);
    // Strongly deleterious allele essentially never fixes.
    CHECK_THROWS_AS(wf_conditioned_sweep(ms, 500, -0.5, 0.01, 0, rng, 20), BudgetExceeded);
}
