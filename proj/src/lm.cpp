#include "sweepsim/lm.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>

#include "sweepsim/errors.hpp"

namespace sweepsim {

const char* to_string(LMCategory c) {
    switch (c) {
        case LMCategory::MarkedBirth: return "marked_birth";
        case LMCategory::UnmarkedBirth: return "unmarked_birth";
        case LMCategory::MarkedDeath: return "marked_death";
        case LMCategory::UnmarkedDeath: return "unmarked_death";
        case LMCategory::MarkedMigration: return "marked_migration";
        case LMCategory::UnmarkedMigration: return "unmarked_migration";
    }
    return "unknown";
}

LMState lm_init(const MigrationStructure& ms, const SweepParams& sp, RngStream& rng) {
    sp.validate(ms.d);
    LMState s;
    s.l.assign(ms.d, 0);
    s.m.assign(ms.d, 0);
    for (int i = 0; i < ms.d; ++i) s.l[i] = rng.poisson(2.0 * sp.alpha * ms.rho(i));
    ++s.l[sp.founder];
    s.m[sp.founder] = 1;
    return s;
}

namespace {

// Event loop over at most Cap colonies with fixed-size storage. A colony's
// total rate depends on l_i only; sampling picks the colony, then splits its
// total into births, coalescences and migrations, then marked vs unmarked.
// The cumulative order matches the table order of lm_category_rates.
template <int Cap>
class Engine {
public:
    Engine(const MigrationStructure& ms, const SweepParams& sp, const LMState& state)
        : d_(ms.d), alpha_(sp.alpha), t_(state.t) {
        if (d_ > Cap) throw BadDimension("lm: too many colonies for engine");
        for (int i = 0; i < d_; ++i) {
            half_inv_rho_[i] = 0.5 / ms.rho(i);
            double row = 0.0;
            for (int j = 0; j < d_; ++j)
                if (j != i) {
                    row += ms.a(i, j);
                    row_[i * Cap + j] = ms.a(i, j);
                }
            row_sum_[i] = row;
            mig_[i] = sp.mu * row;
            l_[i] = state.l[i];
            m_[i] = state.m[i];
            if (m_[i] < 0 || m_[i] > l_[i]) throw DomainError("lm: need 0 <= m <= l");
            unmarked_ += l_[i] - m_[i];
            refresh(i);
        }
    }

    bool absorbed() const noexcept { return unmarked_ == 0; }
    double time() const noexcept { return t_; }
    std::int64_t l(int i) const noexcept { return l_[i]; }

    double category_rate(int i, int c) const noexcept {
        const double m = static_cast<double>(m_[i]);
        const double u = static_cast<double>(l_[i] - m_[i]);
        switch (c) {
            case 0: return alpha_ * m;
            case 1: return alpha_ * u;
            case 2: return m * (m - 1.0) * half_inv_rho_[i];
            case 3: return coal_[i] - m * (m - 1.0) * half_inv_rho_[i];
            case 4: return mig_[i] * m;
            default: return mig_[i] * u;
        }
    }

    void export_state(LMState& s) const {
        for (int i = 0; i < d_; ++i) {
            s.l[i] = l_[i];
            s.m[i] = m_[i];
        }
        s.t = t_;
    }

    // Draws the holding time and applies one event; returns (category, from, to).
    LMRate step(RngStream& rng) {
        double total = 0.0;
        for (int i = 0; i < d_; ++i) total += colony_[i];
        t_ += rng.exponential(total);
        double target = rng.uniform() * total;
        int i = 0;
        if constexpr (Cap > 1) {
            int last = -1;
            for (i = 0; i < d_; ++i) {
                if (colony_[i] <= 0.0) continue;
                last = i;
                if (target < colony_[i]) break;
                target -= colony_[i];
            }
            if (i == d_) i = last;
        }
        const double m = static_cast<double>(m_[i]);
        const bool has_unmarked = l_[i] > m_[i];
        int cat;
        if (target < birth_[i]) {
            cat = target < alpha_ * m ? 0 : 1;
        } else if ((target -= birth_[i]) < coal_[i]) {
            cat = target < m * (m - 1.0) * half_inv_rho_[i] ? 2 : 3;
        } else {
            target -= coal_[i];
            cat = (target < mig_[i] * m || !has_unmarked) ? 4 : 5;
        }
        LMRate ev{static_cast<LMCategory>(cat), i, i, 0.0};
        switch (cat) {
            case 0:
                ++l_[i];
                ++m_[i];
                break;
            case 1:
                ++l_[i];
                ++unmarked_;
                break;
            case 2:
                --l_[i];
                --m_[i];
                break;
            case 3:
                --l_[i];
                --unmarked_;
                break;
            default: {
                const int j = pick_destination(i, rng);
                ev.to = j;
                --l_[i];
                ++l_[j];
                if (cat == 4) {
                    --m_[i];
                    ++m_[j];
                }
                refresh(j);
            }
        }
        refresh(i);
        assert(m_[i] >= 0 && m_[i] <= l_[i]);
        return ev;
    }

private:
    void refresh(int i) noexcept {
        const double l = static_cast<double>(l_[i]);
        birth_[i] = alpha_ * l;
        coal_[i] = l * (l - 1.0) * half_inv_rho_[i];
        colony_[i] = birth_[i] + coal_[i] + mig_[i] * l;
    }

    int pick_destination(int i, RngStream& rng) const {
        if (d_ == 2) return 1 - i;
        const double* row = &row_[i * Cap];
        double target = rng.uniform() * row_sum_[i];
        int last = -1;
        for (int j = 0; j < d_; ++j) {
            if (row[j] <= 0.0) continue;
            last = j;
            if (target < row[j]) return j;
            target -= row[j];
        }
        return last;
    }

    int d_;
    double alpha_;
    double t_;
    std::array<double, Cap> half_inv_rho_{}, mig_{}, row_sum_{}, birth_{}, coal_{}, colony_{};
    std::array<double, Cap * Cap> row_{};
    std::array<std::int64_t, Cap> l_{}, m_{};
    std::int64_t unmarked_ = 0;
};

// Calls f(engine) with the smallest engine that fits d.
template <class F>
decltype(auto) with_engine(const MigrationStructure& ms, const SweepParams& sp, const LMState& state, F&& f) {
    if (ms.d <= 1) {
        Engine<1> e(ms, sp, state);
        return f(e);
    }
    if (ms.d == 2) {
        Engine<2> e(ms, sp, state);
        return f(e);
    }
    if (ms.d <= 4) {
        Engine<4> e(ms, sp, state);
        return f(e);
    }
    if (ms.d <= 16) {
        Engine<16> e(ms, sp, state);
        return f(e);
    }
    Engine<64> e(ms, sp, state);
    return f(e);
}

void check_state(const LMState& s, const MigrationStructure& ms) {
    if (static_cast<int>(s.l.size()) != ms.d || static_cast<int>(s.m.size()) != ms.d)
        throw BadDimension("lm: state vectors must have d entries");
}

}  // namespace

std::vector<LMRate> lm_category_rates(const LMState& state, const MigrationStructure& ms, const SweepParams& sp) {
    check_state(state, ms);
    return with_engine(ms, sp, state, [&](const auto& eng) {
        std::vector<LMRate> out;
        for (int i = 0; i < ms.d; ++i) {
            for (int c = 0; c < 4; ++c) out.push_back({static_cast<LMCategory>(c), i, i, eng.category_rate(i, c)});
            for (int c = 4; c < 6; ++c) {
                const double per_line = c == 4 ? static_cast<double>(state.m[i])
                                               : static_cast<double>(state.l[i] - state.m[i]);
                for (int j = 0; j < ms.d; ++j)
                    if (j != i) out.push_back({static_cast<LMCategory>(c), i, j, sp.mu * ms.a(i, j) * per_line});
            }
        }
        return out;
    });
}

LMRate lm_step(LMState& state, const MigrationStructure& ms, const SweepParams& sp, RngStream& rng) {
    check_state(state, ms);
    if (state.absorbed()) throw AbsorbedState("lm_step: m = l");
    return with_engine(ms, sp, state, [&](auto& eng) {
        const LMRate ev = eng.step(rng);
        eng.export_state(state);
        return ev;
    });
}

LMResult lm_hitting_time(const MigrationStructure& ms, const SweepParams& sp, RngStream& rng,
                         const LMOptions& opts) {
    if (!(sp.alpha > 1.0)) throw DomainError("lm_hitting_time: alpha must exceed 1");
    const LMState init = lm_init(ms, sp, rng);
    return with_engine(ms, sp, init, [&](auto& eng) {
        LMResult res;
        const int founder = sp.founder;
        const double window = 2.0 * std::log(sp.alpha) / sp.alpha;
        auto deviation = [&](int i) {
            return std::abs(static_cast<double>(eng.l(i)) / sp.alpha - 2.0 * ms.rho(i));
        };
        if (opts.track_concentration)
            for (int i = 0; i < ms.d; ++i) res.max_concentration_dev = std::max(res.max_concentration_dev, deviation(i));
        bool migrant_seen = false;
        while (!eng.absorbed()) {
            if (res.events >= opts.max_events)
                throw BudgetExceeded("lm_hitting_time: event budget of " + std::to_string(opts.max_events) +
                                     " exhausted");
            const LMRate ev = eng.step(rng);
            ++res.events;
            if (!migrant_seen && ev.category == LMCategory::MarkedMigration && ev.to != founder) {
                migrant_seen = true;
                res.first_migrant_time = eng.time();
            }
            if (opts.track_concentration && eng.time() <= window) {
                res.max_concentration_dev = std::max(res.max_concentration_dev, deviation(ev.from));
                if (ev.to != ev.from) res.max_concentration_dev = std::max(res.max_concentration_dev, deviation(ev.to));
            }
        }
        res.T = eng.time();
        res.scaled = sp.alpha * res.T / std::log(sp.alpha);
        return res;
    });
}

double first_successful_migrant_time(const MigrationStructure& ms, const SweepParams& sp, RngStream& rng,
                                     std::uint64_t max_events) {
    if (ms.d < 2) throw BadDimension("first_successful_migrant_time: needs at least two colonies");
    const LMState init = lm_init(ms, sp, rng);
    // Marked particles stay in the founder colony until the first marked
    // migration; without outflow that never happens.
    double outflow = 0.0;
    for (int j = 0; j < ms.d; ++j)
        if (j != sp.founder) outflow += ms.a(sp.founder, j);
    if (sp.mu * outflow == 0.0) return std::numeric_limits<double>::infinity();
    return with_engine(ms, sp, init, [&](auto& eng) {
        for (std::uint64_t n = 0; !eng.absorbed(); ++n) {
            if (n >= max_events) throw BudgetExceeded("first_successful_migrant_time: event budget exhausted");
            const LMRate ev = eng.step(rng);
            if (ev.category == LMCategory::MarkedMigration && ev.to != sp.founder) return eng.time();
        }
        return std::numeric_limits<double>::infinity();
    });
}

double birth_death_extinction_time(double alpha, double z, RngStream& rng) {
    if (!(alpha > 0.0) || !(z >= 0.0)) throw DomainError("birth_death_extinction_time: need alpha > 0, z >= 0");
    auto k = static_cast<std::int64_t>(std::floor(z * alpha));
    double t = 0.0;
    // Per-line total rate 3 alpha; births with probability 1/3.
    while (k > 0) {
        t += rng.exponential(3.0 * alpha * static_cast<double>(k));
        if (rng.uniform() * 3.0 < 1.0) ++k;
        else --k;
    }
    return t;
}

}  // namespace sweepsim
