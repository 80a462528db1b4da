#include "sweepsim/asg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "sweepsim/errors.hpp"
#include "sweepsim/replicates.hpp"

namespace sweepsim {

const char* to_string(AsgEventKind kind) {
    switch (kind) {
        case AsgEventKind::None: return "none";
        case AsgEventKind::Coalescence: return "coalescence";
        case AsgEventKind::Branching: return "branching";
        case AsgEventKind::Migration: return "migration";
    }
    return "unknown";
}

Counts ParticleSystemState::counts() const {
    Counts k(colonies.size());
    for (std::size_t i = 0; i < colonies.size(); ++i) k[i] = static_cast<std::int64_t>(colonies[i].size());
    return k;
}

std::int64_t ParticleSystemState::total() const noexcept {
    std::int64_t n = 0;
    for (const auto& c : colonies) n += static_cast<std::int64_t>(c.size());
    return n;
}

void add_particles(ParticleSystemState& state, const Counts& counts, std::uint8_t tag) {
    if (static_cast<int>(counts.size()) != state.d()) throw BadDimension("add_particles: counts must have d entries");
    for (int i = 0; i < state.d(); ++i) {
        if (counts[i] < 0) throw DomainError("add_particles: negative count");
        for (std::int64_t n = 0; n < counts[i]; ++n) {
            const std::uint64_t label = state.next_label++;
            state.colonies[i].push_back({label, tag});
            state.initial[i].push_back(label);
        }
    }
}

ParticleSystemState make_particle_system(const Counts& counts, bool log_ancestry, std::uint8_t tag) {
    if (counts.empty()) throw BadDimension("make_particle_system: need at least one colony");
    ParticleSystemState state;
    state.colonies.resize(counts.size());
    state.initial.resize(counts.size());
    state.log_ancestry = log_ancestry;
    add_particles(state, counts, tag);
    return state;
}

namespace {

void check_counts(const Counts& k, const MigrationStructure& ms) {
    if (static_cast<int>(k.size()) != ms.d) throw BadDimension("configuration must have d entries");
    for (auto v : k)
        if (v < 0) throw DomainError("configuration has a negative entry");
}

double total_of(const Counts& k) {
    return static_cast<double>(std::accumulate(k.begin(), k.end(), std::int64_t{0}));
}

const Eigen::MatrixXd& kernel(const MigrationStructure& ms, AsgDirection dir) {
    return dir == AsgDirection::Backward_b ? ms.b : ms.a;
}

double fill_rates(const Counts& k, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir,
                  std::vector<AsgRate>& out) {
    out.clear();
    const auto& r = kernel(ms, dir);
    double total = 0.0;
    for (int i = 0; i < ms.d; ++i) {
        const double ki = static_cast<double>(k[i]);
        const double coal = 0.5 * ki * (ki - 1.0) / ms.rho(i);
        const double branch = sp.alpha * ki;
        out.push_back({AsgEventKind::Coalescence, i, i, coal});
        out.push_back({AsgEventKind::Branching, i, i, branch});
        total += coal + branch;
        for (int j = 0; j < ms.d; ++j) {
            if (j == i) continue;
            const double mig = sp.mu * r(i, j) * ki;
            out.push_back({AsgEventKind::Migration, i, j, mig});
            total += mig;
        }
    }
    return total;
}

std::size_t select_category(const std::vector<AsgRate>& rates, double total, RngStream& rng) {
    double target = rng.uniform() * total;
    std::size_t last_positive = rates.size();
    for (std::size_t c = 0; c < rates.size(); ++c) {
        if (rates[c].rate <= 0.0) continue;
        last_positive = c;
        if ((target -= rates[c].rate) < 0.0) return c;
    }
    return last_positive;
}

Particle take_random(std::vector<Particle>& pool, RngStream& rng) {
    const std::size_t idx = rng.below(pool.size());
    const Particle p = pool[idx];
    pool[idx] = pool.back();
    pool.pop_back();
    return p;
}

void apply_event(ParticleSystemState& state, const AsgRate& ev, RngStream& rng) {
    AsgEvent log;
    log.kind = ev.kind;
    log.time = state.time;
    log.from = ev.from;
    log.to = ev.to;
    auto& pool = state.colonies[ev.from];
    switch (ev.kind) {
        case AsgEventKind::Coalescence: {
            const Particle p1 = take_random(pool, rng);
            const Particle p2 = take_random(pool, rng);
            const Particle child{state.next_label++, static_cast<std::uint8_t>(p1.tag | p2.tag)};
            pool.push_back(child);
            log.parents[0] = p1.label;
            log.parents[1] = p2.label;
            log.n_parents = 2;
            log.children[0] = child.label;
            log.n_children = 1;
            break;
        }
        case AsgEventKind::Branching: {
            const Particle p = take_random(pool, rng);
            const Particle c1{state.next_label++, p.tag};
            const Particle c2{state.next_label++, p.tag};
            pool.push_back(c1);
            pool.push_back(c2);
            log.parents[0] = p.label;
            log.n_parents = 1;
            log.children[0] = c1.label;
            log.children[1] = c2.label;
            log.n_children = 2;
            break;
        }
        case AsgEventKind::Migration: {
            const Particle p = take_random(pool, rng);
            const Particle c{state.next_label++, p.tag};
            state.colonies[ev.to].push_back(c);
            log.parents[0] = p.label;
            log.n_parents = 1;
            log.children[0] = c.label;
            log.n_children = 1;
            break;
        }
        case AsgEventKind::None: return;
    }
    if (state.log_ancestry) state.ancestry.push_back(log);
}

void apply_counts(Counts& k, const AsgRate& ev) {
    switch (ev.kind) {
        case AsgEventKind::Coalescence: --k[ev.from]; break;
        case AsgEventKind::Branching: ++k[ev.from]; break;
        case AsgEventKind::Migration:
            --k[ev.from];
            ++k[ev.to];
            break;
        case AsgEventKind::None: break;
    }
}

}  // namespace

std::vector<AsgRate> asg_category_rates(const Counts& counts, const MigrationStructure& ms, const SweepParams& sp,
                                        AsgDirection dir) {
    check_counts(counts, ms);
    std::vector<AsgRate> out;
    fill_rates(counts, ms, sp, dir, out);
    return out;
}

double asg_total_rate(const Counts& counts, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir) {
    std::vector<AsgRate> out;
    check_counts(counts, ms);
    return fill_rates(counts, ms, sp, dir, out);
}

AsgStepResult asg_step(ParticleSystemState& state, const MigrationStructure& ms, const SweepParams& sp,
                       AsgDirection dir, RngStream& rng) {
    if (state.d() != ms.d) throw BadDimension("asg_step: state dimension differs from migration structure");
    if (state.total() == 0) throw EmptyConfiguration("asg_step: no particles");
    std::vector<AsgRate> rates;
    const double total = fill_rates(state.counts(), ms, sp, dir, rates);
    AsgStepResult res;
    if (!(total > 0.0)) {
        res.holding = std::numeric_limits<double>::infinity();
        return res;
    }
    res.holding = rng.exponential(total);
    state.time += res.holding;
    const auto& ev = rates[select_category(rates, total, rng)];
    apply_event(state, ev, rng);
    res.kind = ev.kind;
    res.from = ev.from;
    res.to = ev.to;
    return res;
}

void asg_run_until(ParticleSystemState& state, const MigrationStructure& ms, const SweepParams& sp,
                   AsgDirection dir, double horizon, RngStream& rng) {
    if (state.d() != ms.d) throw BadDimension("asg_run_until: state dimension differs from migration structure");
    if (state.total() == 0) throw EmptyConfiguration("asg_run_until: no particles");
    std::vector<AsgRate> rates;
    Counts k = state.counts();
    for (;;) {
        const double total = fill_rates(k, ms, sp, dir, rates);
        if (!(total > 0.0)) break;
        const double next = state.time + rng.exponential(total);
        if (next > horizon) break;
        state.time = next;
        const auto& ev = rates[select_category(rates, total, rng)];
        apply_event(state, ev, rng);
        apply_counts(k, ev);
    }
    state.time = std::max(state.time, horizon);
}

AsgStepResult counts_step(Counts& counts, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir,
                          RngStream& rng) {
    check_counts(counts, ms);
    if (total_of(counts) == 0.0) throw EmptyConfiguration("counts_step: no particles");
    std::vector<AsgRate> rates;
    const double total = fill_rates(counts, ms, sp, dir, rates);
    AsgStepResult res;
    if (!(total > 0.0)) {
        res.holding = std::numeric_limits<double>::infinity();
        return res;
    }
    res.holding = rng.exponential(total);
    const auto& ev = rates[select_category(rates, total, rng)];
    apply_counts(counts, ev);
    res.kind = ev.kind;
    res.from = ev.from;
    res.to = ev.to;
    return res;
}

Counts counts_run_for(Counts counts, const MigrationStructure& ms, const SweepParams& sp, AsgDirection dir,
                      double duration, RngStream& rng) {
    check_counts(counts, ms);
    std::vector<AsgRate> rates;
    double t = 0.0;
    for (;;) {
        const double total = fill_rates(counts, ms, sp, dir, rates);
        if (!(total > 0.0)) break;
        t += rng.exponential(total);
        if (t > duration) break;
        apply_counts(counts, rates[select_category(rates, total, rng)]);
    }
    return counts;
}

Counts sample_equilibrium(const MigrationStructure& ms, const SweepParams& sp, bool conditioned_nonzero,
                          RngStream& rng) {
    if (conditioned_nonzero && !(sp.alpha > 0.0))
        throw DomainError("sample_equilibrium: conditioning on nonzero needs alpha > 0");
    Counts k(ms.d);
    do {
        for (int i = 0; i < ms.d; ++i) k[i] = rng.poisson(2.0 * sp.alpha * ms.rho(i));
    } while (conditioned_nonzero && total_of(k) == 0.0);
    return k;
}

double equilibrium_pmf(const Counts& k, const MigrationStructure& ms, const SweepParams& sp) {
    check_counts(k, ms);
    if (total_of(k) == 0.0) return 0.0;
    const double two_alpha = 2.0 * sp.alpha;
    double log_p = -std::log(std::expm1(two_alpha));  // e^{-2a}/(1-e^{-2a}) = 1/(e^{2a}-1)
    for (int i = 0; i < ms.d; ++i) {
        const double ki = static_cast<double>(k[i]);
        log_p += ki * std::log(two_alpha * ms.rho(i)) - std::lgamma(ki + 1.0);
    }
    return std::exp(log_p);
}

std::vector<Counts> enumerate_configurations(int d, std::int64_t k_max) {
    std::vector<Counts> out;
    Counts k(d, 0);
    // Odometer over the simplex {total <= k_max}; last coordinate fastest.
    for (;;) {
        if (total_of(k) > 0.0) out.push_back(k);
        int pos = d - 1;
        while (pos >= 0) {
            ++k[pos];
            if (total_of(k) <= static_cast<double>(k_max)) break;
            k[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return out;
}

double detailed_balance_check(const MigrationStructure& ms, const SweepParams& sp, std::int64_t k_max) {
    if (k_max < 2) throw DomainError("detailed_balance_check: k_max must be at least 2");
    double worst = 0.0;
    std::vector<AsgRate> rates_b, rates_a;
    for (const Counts& k : enumerate_configurations(ms.d, k_max)) {
        const double pk = equilibrium_pmf(k, ms, sp);
        fill_rates(k, ms, sp, AsgDirection::Backward_b, rates_b);
        for (const AsgRate& ev : rates_b) {
            if (ev.rate <= 0.0) continue;
            Counts l = k;
            apply_counts(l, ev);
            if (total_of(l) > static_cast<double>(k_max)) continue;
            // The reverse move from l under the a-dynamics.
            fill_rates(l, ms, sp, AsgDirection::Reversed_a, rates_a);
            double back = 0.0;
            for (const AsgRate& rv : rates_a) {
                Counts m = l;
                apply_counts(m, rv);
                if (m == k && rv.kind != AsgEventKind::None) back += rv.rate;
            }
            const double lhs = pk * ev.rate;
            const double rhs = equilibrium_pmf(l, ms, sp) * back;
            const double scale = std::max(std::abs(lhs), std::abs(rhs));
            if (scale > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / scale);
        }
    }
    return worst;
}

std::vector<std::uint64_t> percolate(const ParticleSystemState& state, const std::vector<std::uint64_t>& marked) {
    std::vector<char> reached(state.next_label, 0);
    for (auto label : marked) {
        if (label >= state.next_label) throw DomainError("percolate: unknown label");
        reached[label] = 1;
    }
    if (!state.log_ancestry && !state.ancestry.empty()) throw DomainError("percolate: incomplete ancestry log");
    for (auto it = state.ancestry.rbegin(); it != state.ancestry.rend(); ++it) {
        bool hit = false;
        for (int c = 0; c < it->n_children; ++c) hit = hit || reached[it->children[c]];
        if (!hit) continue;
        for (int p = 0; p < it->n_parents; ++p) reached[it->parents[p]] = 1;
    }
    std::vector<std::uint64_t> out;
    for (const auto& colony : state.initial)
        for (auto label : colony)
            if (reached[label]) out.push_back(label);
    return out;
}

MarkingResult mark_and_percolate(const ParticleSystemState& state, const Vector& x, const Vector& uniforms) {
    if (static_cast<int>(x.size()) != state.d()) throw BadDimension("mark_and_percolate: x must have d entries");
    if (static_cast<std::int64_t>(uniforms.size()) != state.total())
        throw BadDimension("mark_and_percolate: need one uniform per particle");
    if (!state.log_ancestry) throw DomainError("mark_and_percolate: ancestry logging is off");
    MarkingResult res;
    std::size_t u = 0;
    for (int i = 0; i < state.d(); ++i)
        for (const Particle& p : state.colonies[i])
            if (uniforms[u++] < x[i]) res.marked_at_tau.push_back(p.label);
    res.connected_at_0 = percolate(state, res.marked_at_tau);

    std::vector<char> connected(state.next_label, 0);
    for (auto label : res.connected_at_0) connected[label] = 1;
    res.frequencies.assign(state.d(), 0.0);
    for (int i = 0; i < state.d(); ++i) {
        const auto& init = state.initial[i];
        if (init.empty()) continue;
        std::size_t hits = 0;
        for (auto label : init) hits += connected[label] ? 1 : 0;
        res.frequencies[i] = static_cast<double>(hits) / static_cast<double>(init.size());
    }
    return res;
}

MarkingResult mark_and_percolate(const ParticleSystemState& state, const Vector& x, RngStream& rng) {
    Vector uniforms(static_cast<std::size_t>(state.total()));
    for (double& u : uniforms) u = rng.uniform();
    return mark_and_percolate(state, x, uniforms);
}

double dual_power(const Vector& base, const Counts& k) {
    double v = 1.0;
    for (std::size_t i = 0; i < k.size(); ++i)
        if (k[i] != 0) v *= std::pow(base[i], static_cast<double>(k[i]));
    return v;
}

namespace {

Vector complement(const Vector& x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 - x[i];
    return out;
}

void check_frequency(const Vector& x, const MigrationStructure& ms) {
    if (static_cast<int>(x.size()) != ms.d) throw BadDimension("frequency vector must have d entries");
    for (double v : x)
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("frequency outside [0,1]");
}

MonteCarloEstimate summarize(const std::vector<double>& values) {
    RunningStats rs;
    for (double v : values) rs.add(v);
    return {rs.mean(), rs.std_error(), rs.count()};
}

}  // namespace

MonteCarloEstimate duality_lhs(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                               const SweepParams& sp, IntegratorConfig cfg, std::uint64_t replicates,
                               std::uint64_t seed, unsigned threads) {
    check_counts(k, ms);
    check_frequency(x, ms);
    cfg.conditioned = false;
    cfg.stop_on_fixation = false;
    cfg.record_every = 0;
    const auto values = run_replicates(seed, replicates, threads, [&](RngStream& rng, std::uint64_t) {
        const auto res = integrate({x, 0.0}, ms, sp, cfg, tau, rng);
        return dual_power(complement(res.final.x), k);
    });
    return summarize(values);
}

MonteCarloEstimate duality_rhs(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                               const SweepParams& sp, std::uint64_t replicates, std::uint64_t seed,
                               unsigned threads) {
    check_counts(k, ms);
    check_frequency(x, ms);
    const Vector base = complement(x);
    const auto values = run_replicates(seed, replicates, threads, [&](RngStream& rng, std::uint64_t) {
        return dual_power(base, counts_run_for(k, ms, sp, AsgDirection::Backward_b, tau, rng));
    });
    return summarize(values);
}

DualityReport duality_lhs_vs_rhs(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                                 const SweepParams& sp, const IntegratorConfig& cfg, std::uint64_t replicates,
                                 std::uint64_t seed, unsigned threads) {
    if (total_of(k) == 0.0) throw DomainError("duality: k must be nonzero");
    DualityReport rep;
    rep.lhs = duality_lhs(k, x, tau, ms, sp, cfg, replicates, seed, threads);
    rep.rhs = duality_rhs(k, x, tau, ms, sp, replicates, mix64(seed), threads);
    rep.combined_se = std::hypot(rep.lhs.std_error, rep.rhs.std_error);
    return rep;
}

namespace {

TruncatedMoment truncated_impl(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                               const SweepParams& sp, std::int64_t k_max) {
    check_counts(k, ms);
    check_frequency(x, ms);
    if (total_of(k) == 0.0) throw DomainError("truncated_dual_moment: k must be nonzero");
    if (total_of(k) > static_cast<double>(k_max)) throw DomainError("truncated_dual_moment: total(k) exceeds k_max");
    if (tau < 0.0) throw DomainError("truncated_dual_moment: tau must be nonnegative");

    const auto states = enumerate_configurations(ms.d, k_max);
    const std::size_t n = states.size();
    const std::size_t overflow = n;
    auto key = [&](const Counts& c) {
        std::uint64_t h = 0;
        for (int i = ms.d - 1; i >= 0; --i) h = h * static_cast<std::uint64_t>(k_max + 1) + static_cast<std::uint64_t>(c[i]);
        return h;
    };
    std::unordered_map<std::uint64_t, std::size_t> index;
    index.reserve(n * 2);
    for (std::size_t s = 0; s < n; ++s) index.emplace(key(states[s]), s);

    struct Edge {
        std::size_t to;
        double rate;
    };
    std::vector<std::vector<Edge>> edges(n);
    std::vector<double> exit(n, 0.0);
    std::vector<AsgRate> rates;
    double lambda = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        fill_rates(states[s], ms, sp, AsgDirection::Backward_b, rates);
        for (const AsgRate& ev : rates) {
            if (ev.rate <= 0.0) continue;
            Counts l = states[s];
            apply_counts(l, ev);
            const std::size_t target =
                total_of(l) > static_cast<double>(k_max) ? overflow : index.at(key(l));
            edges[s].push_back({target, ev.rate});
            exit[s] += ev.rate;
        }
        lambda = std::max(lambda, exit[s]);
    }

    TruncatedMoment out;
    out.k_max = k_max;
    out.states = n;
    const Vector base = complement(x);
    const std::size_t start = index.at(key(k));
    if (tau == 0.0 || lambda == 0.0) {
        out.value = dual_power(base, k);
        return out;
    }

    // u_{m+1} = P u_m with P = I + Q / lambda; f on the payoff, g on the overflow indicator.
    std::vector<double> f(n + 1), g(n + 1, 0.0), f_next(n + 1), g_next(n + 1);
    for (std::size_t s = 0; s < n; ++s) f[s] = dual_power(base, states[s]);
    f[overflow] = 0.0;
    g[overflow] = 1.0;

    const double lt = lambda * tau;
    const std::uint64_t terms = static_cast<std::uint64_t>(std::ceil(lt + 12.0 * std::sqrt(lt) + 40.0));
    double value = 0.0, leak = 0.0, weight_sum = 0.0;
    for (std::uint64_t m = 0; m <= terms; ++m) {
        const double md = static_cast<double>(m);
        const double w = std::exp(-lt + md * std::log(lt) - std::lgamma(md + 1.0));
        value += w * f[start];
        leak += w * g[start];
        weight_sum += w;
        if (m == terms) break;
        for (std::size_t s = 0; s < n; ++s) {
            double fa = (1.0 - exit[s] / lambda) * f[s];
            double ga = (1.0 - exit[s] / lambda) * g[s];
            for (const Edge& e : edges[s]) {
                fa += e.rate / lambda * f[e.to];
                ga += e.rate / lambda * g[e.to];
            }
            f_next[s] = fa;
            g_next[s] = ga;
        }
        f_next[overflow] = 0.0;
        g_next[overflow] = 1.0;
        f.swap(f_next);
        g.swap(g_next);
    }
    out.value = value;
    // Unsummed Poisson tail counts as leaked mass.
    out.overflow_mass = leak + std::max(0.0, 1.0 - weight_sum);
    return out;
}

}  // namespace

TruncatedMoment truncated_dual_moment(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                                      const SweepParams& sp, std::int64_t k_max, double tolerance) {
    const auto out = truncated_impl(k, x, tau, ms, sp, k_max);
    if (out.overflow_mass >= tolerance)
        throw TruncationError("truncated_dual_moment: overflow mass " + std::to_string(out.overflow_mass) +
                                  " at k_max " + std::to_string(k_max),
                              out.overflow_mass);
    return out;
}

TruncatedMoment truncated_dual_moment_auto(const Counts& k, const Vector& x, double tau,
                                           const MigrationStructure& ms, const SweepParams& sp, double tolerance,
                                           std::int64_t k_limit) {
    check_counts(k, ms);
    std::int64_t k_max = std::max<std::int64_t>(static_cast<std::int64_t>(total_of(k)) + 8,
                                                static_cast<std::int64_t>(std::ceil(4.0 * sp.alpha)) + 12);
    for (;;) {
        k_max = std::min(k_max, k_limit);
        const auto out = truncated_impl(k, x, tau, ms, sp, k_max);
        if (out.overflow_mass < tolerance) return out;
        if (k_max >= k_limit)
            throw TruncationError("truncated_dual_moment_auto: tolerance not reached below the k_max limit",
                                  out.overflow_mass);
        k_max += std::max<std::int64_t>(8, k_max / 2);
    }
}

double fixation_probability_closed_form(const Vector& x, const MigrationStructure& ms, const SweepParams& sp) {
    check_frequency(x, ms);
    double s = 0.0;
    for (int i = 0; i < ms.d; ++i) s += ms.rho(i) * x[i];
    if (sp.alpha == 0.0) return s;
    return std::expm1(-2.0 * sp.alpha * s) / std::expm1(-2.0 * sp.alpha);
}

double fixation_probability_series(const Vector& x, const MigrationStructure& ms, const SweepParams& sp) {
    check_frequency(x, ms);
    if (!(sp.alpha > 0.0)) throw DomainError("fixation_probability_series: alpha must be positive");
    // E[prod (1-x_i)^{Pi_i}] for independent Poisson Pi_i, summed term by term.
    double product = 1.0;
    for (int i = 0; i < ms.d; ++i) {
        const double mean = 2.0 * sp.alpha * ms.rho(i);
        const auto top = static_cast<std::int64_t>(std::ceil(mean + 40.0 * std::sqrt(mean) + 60.0));
        double sum = 0.0;
        for (std::int64_t n = 0; n <= top; ++n) {
            const double nd = static_cast<double>(n);
            const double log_pmf = -mean + nd * std::log(mean) - std::lgamma(nd + 1.0);
            sum += std::exp(log_pmf) * std::pow(1.0 - x[i], nd);
        }
        product *= sum;
    }
    const double zero = std::exp(-2.0 * sp.alpha);
    const double psi_moment = (product - zero) / (1.0 - zero);
    return 1.0 - psi_moment;
}

namespace {

ParticleSystemState run_yz(const Counts& k, double tau, const MigrationStructure& ms, const SweepParams& sp,
                           RngStream& rng) {
    check_counts(k, ms);
    if (total_of(k) == 0.0) throw DomainError("coupled_yz_run: k must be nonzero");
    const Counts y0 = sample_equilibrium(ms, sp, false, rng);
    ParticleSystemState state = make_particle_system(y0, false, kTagY);
    add_particles(state, k, kTagZ);
    asg_run_until(state, ms, sp, AsgDirection::Backward_b, tau, rng);
    return state;
}

}  // namespace

YZIndicators coupled_yz_run(const Counts& k, const Vector& x, double tau, const MigrationStructure& ms,
                            const SweepParams& sp, RngStream& rng) {
    check_frequency(x, ms);
    const ParticleSystemState state = run_yz(k, tau, ms, sp, rng);
    YZIndicators out;
    out.z_unmarked = true;
    for (int i = 0; i < ms.d; ++i) {
        for (const Particle& p : state.colonies[i]) {
            if (!(rng.uniform() < x[i])) continue;
            if (p.tag & kTagY) out.y_marked = true;
            if (p.tag & kTagZ) out.z_unmarked = false;
        }
    }
    return out;
}

YZWeights coupled_yz_small_marking(const Counts& k, int founder, double tau, const MigrationStructure& ms,
                                   const SweepParams& sp, RngStream& rng) {
    if (founder < 0 || founder >= ms.d) throw DomainError("coupled_yz_small_marking: founder outside colony range");
    const ParticleSystemState state = run_yz(k, tau, ms, sp, rng);
    YZWeights out;
    for (const Particle& p : state.colonies[founder]) {
        if (!(p.tag & kTagY)) continue;
        out.weight += 1.0;
        if (!(p.tag & kTagZ)) out.z_free += 1.0;
    }
    return out;
}

ConditionedEstimate conditioned_duality_estimate(const Counts& k, const Vector& x, double tau,
                                                 const MigrationStructure& ms, const SweepParams& sp,
                                                 std::uint64_t accepted, std::uint64_t seed, unsigned threads,
                                                 std::uint64_t max_attempts) {
    check_frequency(x, ms);
    if (accepted < 1) throw DomainError("conditioned_duality_estimate: need at least one accepted replicate");
    ConditionedEstimate est;
    std::uint64_t hits = 0;
    double rate_guess = 0.5;
    while (est.accepted < accepted) {
        if (est.attempted >= max_attempts)
            throw BudgetExceeded("conditioned_duality_estimate: acceptance budget exhausted");
        const double want = static_cast<double>(accepted - est.accepted) / rate_guess * 1.1 + 64.0;
        const std::uint64_t batch =
            std::min<std::uint64_t>(static_cast<std::uint64_t>(want), max_attempts - est.attempted);
        const auto results = run_replicates(
            seed, batch, threads,
            [&](RngStream& rng, std::uint64_t) { return coupled_yz_run(k, x, tau, ms, sp, rng); }, est.attempted);
        for (const auto& r : results) {
            ++est.attempted;
            if (!r.y_marked) continue;
            ++est.accepted;
            hits += r.z_unmarked ? 1 : 0;
            if (est.accepted == accepted) break;
        }
        rate_guess = std::max(1e-6, static_cast<double>(est.accepted) / static_cast<double>(est.attempted));
    }
    const Proportion p = proportion(hits, est.accepted);
    est.mean = p.p_hat;
    est.std_error = p.std_err;
    return est;
}

ConditionedEstimate conditioned_duality_small_marking(const Counts& k, int founder, double tau,
                                                      const MigrationStructure& ms, const SweepParams& sp,
                                                      std::uint64_t replicates, std::uint64_t seed,
                                                      unsigned threads) {
    const auto results = run_replicates(seed, replicates, threads, [&](RngStream& rng, std::uint64_t) {
        return coupled_yz_small_marking(k, founder, tau, ms, sp, rng);
    });
    ConditionedEstimate est;
    est.attempted = replicates;
    double sw = 0.0, sa = 0.0;
    for (const auto& r : results) {
        sw += r.weight;
        sa += r.z_free;
        if (r.weight > 0.0) ++est.accepted;
    }
    if (sw == 0.0) return est;
    est.mean = sa / sw;
    // Delta-method standard error of a ratio of sums.
    double ss = 0.0;
    for (const auto& r : results) {
        const double e = r.z_free - est.mean * r.weight;
        ss += e * e;
    }
    est.std_error = std::sqrt(ss) / sw;
    return est;
}

ConditionedEstimate conditioned_sde_moment(const Counts& k, const Vector& x, double tau,
                                           const MigrationStructure& ms, const SweepParams& sp,
                                           IntegratorConfig cfg, std::uint64_t replicates, std::uint64_t seed,
                                           unsigned threads) {
    check_counts(k, ms);
    check_frequency(x, ms);
    cfg.conditioned = true;
    cfg.stop_on_fixation = false;
    cfg.record_every = 0;
    const auto results = run_replicates(seed, replicates, threads, [&](RngStream& rng, std::uint64_t) {
        const auto res = integrate({x, 0.0}, ms, sp, cfg, tau, rng);
        if (res.outcome == DiffusionOutcome::Discarded) return -1.0;
        return dual_power(complement(res.final.x), k);
    });
    RunningStats rs;
    for (double v : results)
        if (v >= 0.0) rs.add(v);
    ConditionedEstimate est;
    est.mean = rs.mean();
    est.std_error = rs.std_error();
    est.accepted = rs.count();
    est.attempted = replicates;
    return est;
}

}  // namespace sweepsim
