#include "deformsim/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <list>
#include <map>
#include <set>

namespace deformsim::oracle {

namespace {

struct Tap {
    long long x;
    long long y;
    long double w;
};

std::vector<Tap> taps_of(long double px, long double py) {
    const long double fx = std::floor(px);
    const long double fy = std::floor(py);
    const long double ax = px - fx;
    const long double ay = py - fy;
    const auto x = static_cast<long long>(fx);
    const auto y = static_cast<long long>(fy);
    return {{x, y, (1 - ax) * (1 - ay)}, {x + 1, y, ax * (1 - ay)}, {x, y + 1, (1 - ax) * ay}, {x + 1, y + 1, ax * ay}};
}

bool inside(long long x, long long y, const LevelShape& s) { return x >= 0 && y >= 0 && x < s.width && y < s.height; }

long double to_pixel(double ref, double off, int extent) {
    return (static_cast<long double>(ref) + static_cast<long double>(off)) * static_cast<long double>(extent - 1);
}

}  // namespace

long double exp_extended(long double x) { return std::exp(x); }

std::vector<long double> softmax(std::span<const double> logits, SamplingDims dims) {
    const std::size_t group = static_cast<std::size_t>(dims.levels) * static_cast<std::size_t>(dims.points);
    std::vector<long double> out(logits.size());
    for (std::size_t start = 0; start < logits.size(); start += group) {
        long double sum = 0;
        for (std::size_t i = 0; i < group; ++i) sum += std::exp(static_cast<long double>(logits[start + i]));
        for (std::size_t i = 0; i < group; ++i) out[start + i] = std::exp(static_cast<long double>(logits[start + i])) / sum;
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double s = 0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
            c(i, j) = static_cast<double>(s);
        }
    }
    return c;
}

AttentionOutput deformable_attention(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                     const ProjectionWeights& weights) {
    const auto dims = queries.dims;
    const int D = pyramid.channels();
    const int M = dims.heads;
    const int Dh = D / M;
    AttentionOutput result;
    for (const auto& q : queries.queries) {
        const auto A = softmax(q.logits, dims);
        std::vector<long double> out(static_cast<std::size_t>(D), 0);
        for (int m = 0; m < M; ++m) {
            const auto& head = weights.heads[static_cast<std::size_t>(m)];
            std::vector<long double> agg(static_cast<std::size_t>(Dh), 0);
            for (int l = 0; l < dims.levels; ++l) {
                const auto& map = pyramid.level(static_cast<std::size_t>(l));
                const auto shape = map.shape();
                for (int k = 0; k < dims.points; ++k) {
                    const std::size_t idx = (static_cast<std::size_t>(m) * dims.levels + l) * dims.points + k;
                    const auto px = to_pixel(q.ref_point.u, q.offsets[idx].u, shape.width);
                    const auto py = to_pixel(q.ref_point.v, q.offsets[idx].v, shape.height);
                    std::vector<long double> x(static_cast<std::size_t>(D), 0);
                    for (const auto& t : taps_of(px, py)) {
                        if (!inside(t.x, t.y, shape)) continue;
                        const auto v = map.at(static_cast<int>(t.y), static_cast<int>(t.x));
                        for (int d = 0; d < D; ++d) x[static_cast<std::size_t>(d)] += t.w * v[static_cast<std::size_t>(d)];
                    }
                    for (int r = 0; r < Dh; ++r) {
                        long double s = 0;
                        for (int d = 0; d < D; ++d) s += head.value_proj(r, d) * x[static_cast<std::size_t>(d)];
                        agg[static_cast<std::size_t>(r)] += A[idx] * s;
                    }
                }
            }
            for (int d = 0; d < D; ++d) {
                long double s = 0;
                for (int r = 0; r < Dh; ++r) s += head.output_proj(d, r) * agg[static_cast<std::size_t>(r)];
                out[static_cast<std::size_t>(d)] += s;
            }
        }
        QueryOutput row;
        row.id = q.id;
        for (const auto v : out) row.values.push_back(static_cast<double>(v));
        result.push_back(std::move(row));
    }
    return result;
}

std::vector<LineId> footprint(const Query& query, SamplingDims dims, const PyramidShape& shape) {
    std::set<LineId> lines;
    for (int m = 0; m < dims.heads; ++m) {
        for (int l = 0; l < dims.levels; ++l) {
            const auto s = shape.levels[static_cast<std::size_t>(l)];
            for (int k = 0; k < dims.points; ++k) {
                const std::size_t idx = (static_cast<std::size_t>(m) * dims.levels + l) * dims.points + k;
                const auto px = to_pixel(query.ref_point.u, query.offsets[idx].u, s.width);
                const auto py = to_pixel(query.ref_point.v, query.offsets[idx].v, s.height);
                for (const auto& t : taps_of(px, py)) {
                    if (inside(t.x, t.y, s)) lines.insert({l, static_cast<std::int32_t>(t.y), static_cast<std::int32_t>(t.x)});
                }
            }
        }
    }
    return {lines.begin(), lines.end()};
}

std::vector<LineId> prefetch_region(NormPoint ref, std::span<const int> radii, const PyramidShape& shape) {
    std::vector<LineId> lines;
    for (std::size_t l = 0; l < shape.levels.size(); ++l) {
        const auto s = shape.levels[l];
        const auto cx = static_cast<long long>(std::floor(ref.u * (s.width - 1)));
        const auto cy = static_cast<long long>(std::floor(ref.v * (s.height - 1)));
        const long long r = radii[l];
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                if (x >= cx - r && x <= cx + 1 + r && y >= cy - r && y <= cy + 1 + r) {
                    lines.push_back({static_cast<std::int32_t>(l), y, x});
                }
            }
        }
    }
    std::sort(lines.begin(), lines.end());
    return lines;
}

std::int64_t stall_set_difference(std::span<const std::size_t> order, std::span<const std::vector<LineId>> footprints,
                                  std::int64_t t_fetch) {
    std::int64_t total = 0;
    for (std::size_t i = 1; i < order.size(); ++i) {
        const std::set<LineId> current(footprints[order[i - 1]].begin(), footprints[order[i - 1]].end());
        for (const auto& line : footprints[order[i]]) {
            if (!current.count(line)) total += t_fetch;
        }
    }
    return total;
}

std::vector<bool> direct_mapped_hits(std::span<const std::size_t> addresses, std::size_t capacity) {
    std::map<std::size_t, std::size_t> resident;
    std::vector<bool> hits;
    hits.reserve(addresses.size());
    for (const auto a : addresses) {
        const auto set = a % capacity;
        const auto it = resident.find(set);
        const bool hit = it != resident.end() && it->second == a;
        hits.push_back(hit);
        resident[set] = a;
    }
    return hits;
}

ExhaustiveResult exhaustive_min_stall(std::span<const std::vector<LineId>> footprints, std::int64_t t_fetch) {
    const std::size_t n = footprints.size();
    std::vector<std::vector<std::int64_t>> cost(n, std::vector<std::int64_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        const std::set<LineId> from(footprints[i].begin(), footprints[i].end());
        for (std::size_t j = 0; j < n; ++j) {
            for (const auto& line : footprints[j]) {
                if (!from.count(line)) cost[i][j] += t_fetch;
            }
        }
    }
    ExhaustiveResult result;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    bool first = true;
    do {
        std::int64_t s = 0;
        for (std::size_t i = 1; i < n; ++i) s += cost[perm[i - 1]][perm[i]];
        ++result.orders_checked;
        if (first || s < result.best_stall) {
            result.best_stall = s;
            result.best_order = perm;
            first = false;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return result;
}

std::vector<std::size_t> greedy_window_order(std::span<const NormPoint> refs, std::size_t window) {
    std::vector<std::size_t> order;
    if (refs.empty()) return order;
    std::list<std::size_t> pending;
    std::size_t next = 0;
    while (pending.size() < window && next < refs.size()) pending.push_back(next++);
    std::size_t current = pending.front();
    pending.pop_front();
    order.push_back(current);
    if (next < refs.size()) pending.push_back(next++);
    while (!pending.empty()) {
        auto best = pending.end();
        double best_d = 0;
        for (auto it = pending.begin(); it != pending.end(); ++it) {
            const double d = std::fabs(refs[*it].u - refs[current].u) + std::fabs(refs[*it].v - refs[current].v);
            if (best == pending.end() || d < best_d || (d == best_d && *it < *best)) {
                best = it;
                best_d = d;
            }
        }
        current = *best;
        pending.erase(best);
        order.push_back(current);
        if (next < refs.size()) pending.push_back(next++);
    }
    return order;
}

int bitonic_network_depth(int n) {
    int size = 1;
    while (size < n) size *= 2;
    int depth = 0;
    for (int k = 2; k <= size; k *= 2) {
        for (int j = k / 2; j >= 1; j /= 2) {
            std::vector<std::pair<int, int>> stage;
            for (int i = 0; i < size; ++i) {
                const int partner = i ^ j;
                if (partner > i) stage.emplace_back(i, partner);
            }
            if (!stage.empty()) ++depth;
        }
    }
    return depth;
}

std::uint64_t bank_conflicts(const std::vector<std::vector<std::pair<int, int>>>& groups, int banks) {
    std::uint64_t total = 0;
    for (const auto& g : groups) {
        std::map<int, std::uint64_t> per_bank;
        for (const auto& [x, y] : g) ++per_bank[((x + 2 * y) % banks + banks) % banks];
        for (const auto& [bank, count] : per_bank) total += count * (count - 1) / 2;
    }
    return total;
}

RunLengths run_lengths(std::span<const std::size_t> addresses) {
    RunLengths r;
    if (addresses.empty()) return r;
    std::vector<std::size_t> lengths{1};
    for (std::size_t i = 1; i < addresses.size(); ++i) {
        if (addresses[i] == addresses[i - 1] + 1) {
            ++lengths.back();
        } else {
            lengths.push_back(1);
        }
    }
    r.runs = lengths.size();
    std::size_t sum = 0;
    for (const auto v : lengths) sum += v;
    r.mean_run = static_cast<double>(sum) / static_cast<double>(r.runs);
    return r;
}

}  // namespace deformsim::oracle
