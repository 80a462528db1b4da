#include "sweepsim/forward.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "sweepsim/errors.hpp"
#include "sweepsim/replicates.hpp"

namespace sweepsim {

bool MoranState::all_zero() const noexcept {
    return std::all_of(counts.begin(), counts.end(), [](std::int64_t c) { return c == 0; });
}

bool MoranState::all_full() const noexcept {
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] != capacity[i]) return false;
    return true;
}

Vector MoranState::frequencies() const {
    Vector x(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        x[i] = capacity[i] > 0 ? static_cast<double>(counts[i]) / static_cast<double>(capacity[i]) : 0.0;
    return x;
}

std::vector<std::int64_t> colony_capacities(const MigrationStructure& ms, std::int64_t N) {
    if (N < ms.d) throw DomainError("colony_capacities: N must be at least the number of colonies");
    std::vector<std::int64_t> cap(ms.d);
    std::vector<double> remainder(ms.d);
    std::int64_t assigned = 0;
    for (int i = 0; i < ms.d; ++i) {
        const double exact = ms.rho(i) * static_cast<double>(N);
        cap[i] = static_cast<std::int64_t>(std::floor(exact));
        remainder[i] = exact - static_cast<double>(cap[i]);
        assigned += cap[i];
    }
    std::vector<int> order(ms.d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return remainder[x] > remainder[y]; });
    for (std::int64_t k = 0; assigned < N; ++k, ++assigned) ++cap[order[k % ms.d]];
    for (int i = 0; i < ms.d; ++i)
        if (cap[i] == 0) throw DomainError("colony_capacities: colony " + std::to_string(i + 1) + " is empty");
    return cap;
}

MoranState make_moran_state(const MigrationStructure& ms, std::int64_t N, const std::vector<std::int64_t>& counts) {
    MoranState state;
    state.N = N;
    state.capacity = colony_capacities(ms, N);
    if (static_cast<int>(counts.size()) != ms.d) throw BadDimension("make_moran_state: counts must have d entries");
    for (int i = 0; i < ms.d; ++i)
        if (counts[i] < 0 || counts[i] > state.capacity[i])
            throw DomainError("make_moran_state: count in colony " + std::to_string(i + 1) + " outside [0, " +
                              std::to_string(state.capacity[i]) + "]");
    state.counts = counts;
    return state;
}

MoranState moran_state_from_frequencies(const MigrationStructure& ms, std::int64_t N, const Vector& x) {
    if (static_cast<int>(x.size()) != ms.d) throw BadDimension("moran_state_from_frequencies: x must have d entries");
    const auto cap = colony_capacities(ms, N);
    std::vector<std::int64_t> counts(ms.d);
    for (int i = 0; i < ms.d; ++i) {
        if (!(x[i] >= 0.0 && x[i] <= 1.0)) throw DomainError("moran_state_from_frequencies: x outside [0,1]");
        counts[i] = std::llround(x[i] * static_cast<double>(cap[i]));
    }
    return make_moran_state(ms, N, counts);
}

namespace {

template <bool TrackTime>
MoranEvent moran_step_impl(MoranState& state, const MigrationStructure& ms, const SweepParams& sp, RngStream& rng) {
    const int d = ms.d;
    // Per-colony rates for +1 and -1 changes, split by mechanism.
    double up_res[16], up_sel[16], up_mig[16], down_mig[16];
    std::vector<double> heap_buf;
    double* buf[4] = {up_res, up_sel, up_mig, down_mig};
    if (d > 16) {
        heap_buf.assign(4 * static_cast<std::size_t>(d), 0.0);
        for (int k = 0; k < 4; ++k) buf[k] = heap_buf.data() + k * d;
    }
    double total = 0.0;
    for (int j = 0; j < d; ++j) {
        const double k = static_cast<double>(state.counts[j]);
        const double c = static_cast<double>(state.capacity[j]);
        const double het = k * (c - k);
        // Half of the mixed-pair resampling events raise the count.
        buf[0][j] = 0.5 * het / ms.rho(j);
        buf[1][j] = sp.alpha * het / c;
        double in_up = 0.0, in_down = 0.0;
        if (sp.mu > 0.0) {
            for (int i = 0; i < d; ++i) {
                if (i == j) continue;
                const double flow = sp.mu * ms.a(i, j);
                if (flow == 0.0) continue;
                in_up += flow * static_cast<double>(state.counts[i]) * (c - k) / c;
                in_down += flow * static_cast<double>(state.capacity[i] - state.counts[i]) * k / c;
            }
        }
        buf[2][j] = in_up;
        buf[3][j] = in_down;
        total += 2.0 * buf[0][j] + buf[1][j] + in_up + in_down;
    }
    if (!(total > 0.0)) throw AbsorbedState("moran_step: configuration is absorbed");
    if constexpr (TrackTime) state.time += rng.exponential(total);

    double target = rng.uniform() * total;
    for (int j = 0; j < d; ++j) {
        if ((target -= buf[0][j]) < 0.0) {
            ++state.counts[j];
            return MoranEvent::Resampling;
        }
        if ((target -= buf[0][j]) < 0.0) {
            --state.counts[j];
            return MoranEvent::Resampling;
        }
        if ((target -= buf[1][j]) < 0.0) {
            ++state.counts[j];
            return MoranEvent::Selection;
        }
        if ((target -= buf[2][j]) < 0.0) {
            ++state.counts[j];
            return MoranEvent::Migration;
        }
        if ((target -= buf[3][j]) < 0.0) {
            --state.counts[j];
            return MoranEvent::Migration;
        }
    }
    // Floating-point slack: attribute to the last colony with positive rate.
    for (int j = d - 1; j >= 0; --j) {
        if (buf[3][j] > 0.0) {
            --state.counts[j];
            return MoranEvent::Migration;
        }
        if (buf[0][j] > 0.0) {
            --state.counts[j];
            return MoranEvent::Resampling;
        }
        if (buf[1][j] > 0.0 || buf[2][j] > 0.0) {
            ++state.counts[j];
            return buf[1][j] > 0.0 ? MoranEvent::Selection : MoranEvent::Migration;
        }
    }
    throw AbsorbedState("moran_step: no admissible event");
}

// Untimed embedded chain for up to D colonies with precomputed constants.
// Draws one uniform per event and scans rates in the same order as
// moran_step_impl.
template <int D>
bool fixes(const MoranState& init, const MigrationStructure& ms, const SweepParams& sp, RngStream& rng,
           std::uint64_t& events) {
    std::array<std::int64_t, D> k{}, cap{};
    std::array<double, D> half_inv_rho{}, sel_per_het{};
    std::array<std::array<double, D>, D> flow{};  // mu a(i,j) / C_j, indexed [j][i]
    std::int64_t total_k = 0, total_cap = 0;
    for (int j = 0; j < D; ++j) {
        k[j] = init.counts[j];
        cap[j] = init.capacity[j];
        total_k += k[j];
        total_cap += cap[j];
        half_inv_rho[j] = 0.5 / ms.rho(j);
        sel_per_het[j] = sp.alpha / static_cast<double>(cap[j]);
        for (int i = 0; i < D; ++i)
            flow[j][i] = i == j ? 0.0 : sp.mu * ms.a(i, j) / static_cast<double>(cap[j]);
    }
    std::array<double, D> res{}, sel{}, up{}, down{};
    while (total_k != 0 && total_k != total_cap) {
        double total = 0.0;
        for (int j = 0; j < D; ++j) {
            const double kj = static_cast<double>(k[j]);
            const double free = static_cast<double>(cap[j] - k[j]);
            const double het = kj * free;
            double in_b = 0.0, in_w = 0.0;
            for (int i = 0; i < D; ++i) {
                in_b += flow[j][i] * static_cast<double>(k[i]);
                in_w += flow[j][i] * static_cast<double>(cap[i] - k[i]);
            }
            res[j] = het * half_inv_rho[j];
            sel[j] = het * sel_per_het[j];
            up[j] = in_b * free;
            down[j] = in_w * kj;
            total += 2.0 * res[j] + sel[j] + up[j] + down[j];
        }
        ++events;
        double target = rng.uniform() * total;
        int j = 0;
        int delta = 0;
        for (; j < D; ++j) {
            if ((target -= res[j]) < 0.0) { delta = 1; break; }
            if ((target -= res[j]) < 0.0) { delta = -1; break; }
            if ((target -= sel[j]) < 0.0) { delta = 1; break; }
            if ((target -= up[j]) < 0.0) { delta = 1; break; }
            if ((target -= down[j]) < 0.0) { delta = -1; break; }
        }
        if (delta == 0) {
            // Floating-point slack: last colony with a positive rate, as in moran_step_impl.
            for (j = D - 1; j >= 0; --j) {
                if (down[j] > 0.0 || res[j] > 0.0) { delta = -1; break; }
                if (sel[j] > 0.0 || up[j] > 0.0) { delta = 1; break; }
            }
            if (delta == 0) throw AbsorbedState("moran: no admissible event");
        }
        k[j] += delta;
        total_k += delta;
    }
    return total_k == total_cap;
}

template <bool TrackTime>
AbsorptionOutcome run_to_absorption(MoranState state, const MigrationStructure& ms, const SweepParams& sp,
                                    RngStream& rng) {
    AbsorptionOutcome out;
    if constexpr (!TrackTime) {
        switch (ms.d) {
            case 1: out.fixed = fixes<1>(state, ms, sp, rng, out.events); return out;
            case 2: out.fixed = fixes<2>(state, ms, sp, rng, out.events); return out;
            case 3: out.fixed = fixes<3>(state, ms, sp, rng, out.events); return out;
            case 4: out.fixed = fixes<4>(state, ms, sp, rng, out.events); return out;
            default: break;
        }
    }
    while (!state.absorbed()) {
        moran_step_impl<TrackTime>(state, ms, sp, rng);
        ++out.events;
    }
    out.fixed = state.all_full();
    out.time = state.time;
    return out;
}

}  // namespace

MoranEvent moran_step(MoranState& state, const MigrationStructure& ms, const SweepParams& sp, RngStream& rng) {
    if (state.absorbed()) throw AbsorbedState("moran_step: configuration is absorbed");
    return moran_step_impl<true>(state, ms, sp, rng);
}

AbsorptionOutcome moran_fixation_run(MoranState state, const MigrationStructure& ms, const SweepParams& sp,
                                     RngStream& rng) {
    return run_to_absorption<true>(std::move(state), ms, sp, rng);
}

Proportion estimate_fixation_probability(const MoranState& init, const MigrationStructure& ms,
                                         const SweepParams& sp, std::uint64_t replicates, std::uint64_t seed,
                                         unsigned threads) {
    if (replicates < 1) throw DomainError("estimate_fixation_probability: need at least one replicate");
    const auto fixed = run_replicates(seed, replicates, threads, [&](RngStream& rng, std::uint64_t) -> char {
        return run_to_absorption<false>(init, ms, sp, rng).fixed ? 1 : 0;
    });
    const auto successes = static_cast<std::uint64_t>(std::count(fixed.begin(), fixed.end(), 1));
    return proportion(successes, replicates);
}

bool WrightFisherState::fixed() const noexcept {
    return std::all_of(freq.begin(), freq.end(), [](double x) { return x >= 1.0; });
}

bool WrightFisherState::lost() const noexcept {
    return std::all_of(freq.begin(), freq.end(), [](double x) { return x <= 0.0; });
}

Vector wf_expected_frequencies(const WrightFisherState& state, const MigrationStructure& ms) {
    const int d = ms.d;
    Vector w(d);
    for (int i = 0; i < d; ++i) {
        const double x = state.freq[i];
        w[i] = x * (1.0 + state.s) / (1.0 + state.s * x);
    }
    Vector p(d);
    for (int i = 0; i < d; ++i) {
        double row = 0.0, mixed = 0.0;
        for (int j = 0; j < d; ++j) {
            if (j == i) continue;
            row += ms.a(i, j);
            mixed += ms.a(i, j) * w[j];
        }
        const double m = row > 0.0 ? state.m : 0.0;
        p[i] = (1.0 - m) * w[i] + (row > 0.0 ? m * mixed / row : 0.0);
        p[i] = std::clamp(p[i], 0.0, 1.0);
    }
    return p;
}

void wf_generation(WrightFisherState& state, const MigrationStructure& ms, RngStream& rng) {
    const Vector p = wf_expected_frequencies(state, ms);
    for (int i = 0; i < ms.d; ++i)
        state.freq[i] = static_cast<double>(rng.binomial(state.N, p[i])) / static_cast<double>(state.N);
    ++state.generation;
}

WrightFisherTrajectory wf_conditioned_sweep(const MigrationStructure& ms, std::int64_t N, double s, double m,
                                            int founder, RngStream& rng, std::uint64_t max_attempts) {
    if (N < 1) throw DomainError("wf_conditioned_sweep: N must be positive");
    if (founder < 0 || founder >= ms.d) throw DomainError("wf_conditioned_sweep: founder outside colony range");
    WrightFisherTrajectory traj;
    for (traj.attempts = 1; traj.attempts <= max_attempts; ++traj.attempts) {
        WrightFisherState state{N, s, m, Vector(ms.d, 0.0), 0};
        state.freq[founder] = 1.0 / static_cast<double>(N);
        traj.generation.assign(1, 0);
        traj.freq.assign(1, state.freq);
        while (!state.fixed() && !state.lost()) {
            wf_generation(state, ms, rng);
            traj.generation.push_back(state.generation);
            traj.freq.push_back(state.freq);
        }
        if (state.fixed()) return traj;
    }
    throw BudgetExceeded("wf_conditioned_sweep: no fixed run within the attempt budget");
}

}  // namespace sweepsim
