#include "deformsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deformsim/errors.hpp"

namespace deformsim {

void SchedulerConfig::validate() const {
    if (window < 1) throw ConfigError("scheduler.window", "must be at least 1");
    if (parallelism < 1) throw ConfigError("scheduler.parallelism", "must be at least 1");
    if (channels < 1) throw ConfigError("scheduler.channels", "must be at least 1");
}

SorterCost sorter_cost(int window_occupancy, const SchedulerConfig& config) {
    SorterCost cost;
    int s = 0;
    while ((1 << s) < window_occupancy) ++s;
    cost.stages = s * (s + 1) / 2;
    cost.comparators = (std::max(window_occupancy, 0) + 1) / 2;
    cost.fits_in_slack = cost.stages <= config.slack_cycles();
    return cost;
}

double l1_distance(NormPoint p, NormPoint q) { return std::abs(p.u - q.u) + std::abs(p.v - q.v); }

Schedule identity_schedule(std::size_t n) {
    Schedule s;
    s.order.resize(n);
    std::iota(s.order.begin(), s.order.end(), std::size_t{0});
    if (n > 1) s.lookahead.assign(s.order.begin() + 1, s.order.end());
    return s;
}

Schedule dooq_schedule(const std::vector<NormPoint>& ref_points, const std::vector<std::int64_t>& ids,
                       const SchedulerConfig& config) {
    config.validate();
    const std::size_t n = ref_points.size();
    if (ids.size() != n) throw ConfigError("dooq_schedule: ids and reference points differ in length");
    Schedule s;
    if (n == 0) return s;
    s.order.reserve(n);
    s.sorter.reserve(n);

    const auto window_cap = static_cast<std::size_t>(config.window);
    std::vector<std::size_t> window;
    window.reserve(window_cap);
    std::size_t next_in = 0;
    const auto refill = [&] {
        while (window.size() < window_cap && next_in < n) window.push_back(next_in++);
    };
    refill();

    // The walk starts from the first query of the batch.
    std::size_t current = window.front();
    s.sorter.push_back(sorter_cost(static_cast<int>(window.size()), config));
    window.erase(window.begin());
    s.order.push_back(current);
    refill();

    while (!window.empty()) {
        s.sorter.push_back(sorter_cost(static_cast<int>(window.size()), config));
        std::size_t best = 0;
        double best_dist = l1_distance(ref_points[window[0]], ref_points[current]);
        for (std::size_t i = 1; i < window.size(); ++i) {
            const double dist = l1_distance(ref_points[window[i]], ref_points[current]);
            if (dist < best_dist || (dist == best_dist && ids[window[i]] < ids[window[best]])) {
                best = i;
                best_dist = dist;
            }
        }
        current = window[best];
        // Swap-remove: window membership matters, its internal order does not.
        window[best] = window.back();
        window.pop_back();
        s.order.push_back(current);
        refill();
    }
    s.lookahead.assign(s.order.begin() + 1, s.order.end());
    return s;
}

Schedule dooq_schedule(const QueryBatch& queries, const SchedulerConfig& config) {
    std::vector<NormPoint> refs;
    std::vector<std::int64_t> ids;
    refs.reserve(queries.size());
    ids.reserve(queries.size());
    for (const auto& q : queries.queries) {
        refs.push_back(q.ref_point);
        ids.push_back(q.id);
    }
    return dooq_schedule(refs, ids, config);
}

bool is_permutation_of_range(const std::vector<std::size_t>& order, std::size_t n) {
    if (order.size() != n) return false;
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (sorted[i] != i) return false;
    }
    return true;
}

}  // namespace deformsim
