#include "sweepsim/epidemics.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>

#include "sweepsim/errors.hpp"

namespace sweepsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_founder(int founder, int d) {
    if (founder < 0 || founder >= d) throw DomainError("epidemic: founder outside colony range");
}

void check_square(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() < 1) throw BadDimension(std::string("epidemic: ") + what + " must be square");
}

}  // namespace

std::vector<std::vector<int>> infection_graph(const Eigen::MatrixXd& a) {
    check_square(a, "a");
    const int d = static_cast<int>(a.rows());
    std::vector<std::vector<int>> g(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j && a(i, j) > 0.0) g[i].push_back(j);
    return g;
}

int eccentricity(const std::vector<std::vector<int>>& graph, int founder) {
    const int d = static_cast<int>(graph.size());
    check_founder(founder, d);
    std::vector<int> layer(d, -1);
    layer[founder] = 0;
    std::queue<int> q;
    q.push(founder);
    int far = 0;
    while (!q.empty()) {
        const int k = q.front();
        q.pop();
        for (int j : graph[k]) {
            if (layer[j] >= 0) continue;
            layer[j] = layer[k] + 1;
            far = std::max(far, layer[j]);
            q.push(j);
        }
    }
    for (int j = 0; j < d; ++j)
        if (layer[j] < 0) throw Unreachable("epidemic: colony " + std::to_string(j + 1) + " is unreachable");
    return far;
}

double epidemic_I_fixation(const Eigen::MatrixXd& a, double gamma, int founder) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("epidemic_I_fixation: gamma outside [0,1]");
    return (1.0 - gamma) * eccentricity(infection_graph(a), founder);
}

double epidemic_I_fixation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gamma, int founder) {
    check_square(a, "a");
    if (gamma.rows() != a.rows() || gamma.cols() != a.cols()) throw BadDimension("epidemic: gamma must match a");
    const int d = static_cast<int>(a.rows());
    check_founder(founder, d);
    const auto g = infection_graph(a);
    for (int i = 0; i < d; ++i)
        for (int j : g[i])
            if (!(gamma(i, j) >= 0.0 && gamma(i, j) <= 1.0))
                throw DomainError("epidemic: gamma(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                  ") outside [0,1]");
    // Label-setting shortest paths; d is small, so an O(d^2) scan suffices.
    std::vector<double> dist(d, kInf);
    std::vector<char> done(d, 0);
    dist[founder] = 0.0;
    for (int round = 0; round < d; ++round) {
        int k = -1;
        for (int i = 0; i < d; ++i)
            if (!done[i] && dist[i] < kInf && (k < 0 || dist[i] < dist[k])) k = i;
        if (k < 0) break;
        done[k] = 1;
        for (int j : g[k]) dist[j] = std::min(dist[j], dist[k] + (1.0 - gamma(k, j)));
    }
    double far = 0.0;
    for (int j = 0; j < d; ++j) {
        if (dist[j] == kInf) throw Unreachable("epidemic: colony " + std::to_string(j + 1) + " is unreachable");
        far = std::max(far, dist[j]);
    }
    return far;
}

std::vector<double> simulate_epidemic_I(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gamma, int founder) {
    check_square(a, "a");
    if (gamma.rows() != a.rows() || gamma.cols() != a.cols()) throw BadDimension("epidemic: gamma must match a");
    const int d = static_cast<int>(a.rows());
    check_founder(founder, d);
    const auto g = infection_graph(a);
    std::vector<double> infected(d, kInf);
    using Pending = std::pair<double, int>;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
    queue.push({0.0, founder});
    while (!queue.empty()) {
        const auto [t, k] = queue.top();
        queue.pop();
        if (infected[k] <= t) continue;
        infected[k] = t;
        for (int j : g[k])
            if (infected[j] == kInf) queue.push({t + (1.0 - gamma(k, j)), j});
    }
    for (int j = 0; j < d; ++j)
        if (infected[j] == kInf) throw Unreachable("epidemic: colony " + std::to_string(j + 1) + " is unreachable");
    return infected;
}

EpidemicJRun epidemic_J_run(const MigrationStructure& ms, int founder, RngStream& rng) {
    const int d = ms.d;
    check_founder(founder, d);
    (void)eccentricity(infection_graph(ms.a), founder);
    std::vector<int> state(d, 0);
    std::vector<double> timer(d, kInf);  // time of the pending 1 -> 2 move
    state[founder] = 1;
    timer[founder] = 1.0;
    EpidemicJRun run;
    run.events.push_back({0.0, founder, 1});
    double t = 0.0;
    std::vector<double> rate(d, 0.0);
    auto refresh = [&] {
        double total = 0.0;
        for (int j = 0; j < d; ++j) {
            rate[j] = 0.0;
            if (state[j] != 0) continue;
            for (int k = 0; k < d; ++k)
                if (k != j && state[k] == 2) rate[j] += 2.0 * ms.rho(k) * ms.a(k, j);
            total += rate[j];
        }
        return total;
    };
    double total = refresh();
    int in_two = 0;
    while (in_two < d) {
        int next = -1;
        for (int j = 0; j < d; ++j)
            if (timer[j] < kInf && (next < 0 || timer[j] < timer[next])) next = j;
        const double t_timer = next >= 0 ? timer[next] : kInf;
        const double t_clock = total > 0.0 ? t + rng.exponential(total) : kInf;
        if (t_timer == kInf && t_clock == kInf) throw Unreachable("epidemic_J: process stalled");
        if (t_clock < t_timer) {
            t = t_clock;
            double target = rng.uniform() * total;
            int hit = -1;
            for (int j = 0; j < d; ++j) {
                if (rate[j] <= 0.0) continue;
                hit = j;
                if (target < rate[j]) break;
                target -= rate[j];
            }
            state[hit] = 1;
            timer[hit] = t + 1.0;
            run.events.push_back({t, hit, 1});
            // The infectious set is unchanged; only the infected colony's clock goes.
            total -= rate[hit];
            rate[hit] = 0.0;
            if (total < 0.0) total = 0.0;
        } else {
            t = t_timer;
            state[next] = 2;
            timer[next] = kInf;
            ++in_two;
            run.events.push_back({t, next, 2});
            total = refresh();
        }
    }
    run.S = t;
    return run;
}

double epidemic_J_sample(const MigrationStructure& ms, int founder, RngStream& rng) {
    return epidemic_J_run(ms, founder, rng).S;
}

double Theorem2Limit::sample(RngStream& rng) const {
    return stochastic ? 1.0 + epidemic_J_sample(ms, founder, rng) : constant;
}

double Theorem2Limit::center(std::uint64_t seed, std::uint64_t n) const {
    if (!stochastic) return constant;
    RngStream rng(seed, 0);
    double sum = 0.0;
    for (std::uint64_t r = 0; r < n; ++r) sum += sample(rng);
    return sum / static_cast<double>(n);
}

Theorem2Limit theorem2_limit(const MigrationStructure& ms, const RegimeSpec& regime, int founder) {
    regime.validate();
    check_founder(founder, ms.d);
    Theorem2Limit lim;
    lim.ms = ms;
    lim.founder = founder;
    switch (regime.kind) {
        case RegimeSpec::Kind::LinearAlpha: lim.constant = 2.0; break;
        case RegimeSpec::Kind::PowerGamma:
            lim.constant = 2.0 + (ms.d > 1 ? epidemic_I_fixation(ms.a, regime.gamma, founder) : 0.0);
            break;
        case RegimeSpec::Kind::InverseLog: lim.stochastic = true; break;
    }
    return lim;
}

}  // namespace sweepsim
