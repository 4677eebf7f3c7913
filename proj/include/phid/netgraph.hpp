#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phid/error.hpp"
#include "phid/numeric.hpp"
#include "phid/pairs.hpp"

namespace phid {

enum class GraphKind {
    kAbstract, ///< w_ij = max(0, syn→syn atom)
    kMemory,   ///< w_ij = max(0, red→red atom)
    kCombined, ///< sum of both clamped weights
};

inline const char* graph_kind_name(GraphKind k)
{
    switch (k) {
    case GraphKind::kAbstract: return "abstract";
    case GraphKind::kMemory: return "memory";
    default: return "combined";
    }
}

/// Undirected weighted head-collaboration graph. Zero weight means no edge.
struct HeadGraph {
    Eigen::MatrixXd weight;
    GraphKind kind = GraphKind::kAbstract;
    std::vector<std::string> warnings;

    std::size_t nodes() const noexcept { return static_cast<std::size_t>(weight.rows()); }

    /// 2m = sum over ordered pairs of w_ij.
    double twice_total_weight() const { return weight.sum(); }

    double degree(std::size_t i) const { return weight.row(static_cast<Eigen::Index>(i)).sum(); }

    static HeadGraph from_matrix(Eigen::MatrixXd w, GraphKind kind = GraphKind::kAbstract)
    {
        if (w.rows() != w.cols()) throw ValidationError("weight matrix must be square");
        HeadGraph g;
        g.kind = kind;
        g.weight = std::move(w);
        for (Eigen::Index i = 0; i < g.weight.rows(); ++i) {
            g.weight(i, i) = 0.0;
            for (Eigen::Index j = 0; j < i; ++j) {
                if (g.weight(i, j) != g.weight(j, i)) throw ValidationError("weight matrix must be symmetric");
                if (!(g.weight(i, j) >= 0.0)) g.weight(i, j) = g.weight(j, i) = 0.0;
            }
        }
        if (g.weight.size() > 0 && (g.weight.array() == 0.0).all()) g.warnings.push_back("graph has no positive edges");
        return g;
    }
};

inline double edge_weight(const PhiAtoms& a, GraphKind kind)
{
    switch (kind) {
    case GraphKind::kAbstract: return std::max(0.0, a.syn_syn());
    case GraphKind::kMemory: return std::max(0.0, a.red_red());
    default: return std::max(0.0, a.syn_syn()) + std::max(0.0, a.red_red());
    }
}

/// Pairs missing from a sampled table get weight 0.
inline HeadGraph build_graph(const PairAtomsTable& table, GraphKind kind)
{
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.heads),
                                              static_cast<Eigen::Index>(table.heads));
    for (const auto& p : table.pairs) {
        const double v = edge_weight(p.atoms, kind);
        w(static_cast<Eigen::Index>(p.i), static_cast<Eigen::Index>(p.j)) = v;
        w(static_cast<Eigen::Index>(p.j), static_cast<Eigen::Index>(p.i)) = v;
    }
    return HeadGraph::from_matrix(std::move(w), kind);
}

/// All-pairs shortest path lengths with edge length 1 / w_ij (Dijkstra).
/// Unreachable pairs are +inf.
inline Eigen::MatrixXd shortest_path_lengths(const HeadGraph& g)
{
    const auto n = static_cast<Eigen::Index>(g.nodes());
    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(n, n, inf);
    using Item = std::pair<double, Eigen::Index>;
    for (Eigen::Index src = 0; src < n; ++src) {
        auto d = dist.row(src);
        d(src) = 0.0;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        pq.emplace(0.0, src);
        std::vector<bool> done(static_cast<std::size_t>(n), false);
        while (!pq.empty()) {
            const auto [du, u] = pq.top();
            pq.pop();
            if (done[static_cast<std::size_t>(u)]) continue;
            done[static_cast<std::size_t>(u)] = true;
            for (Eigen::Index v = 0; v < n; ++v) {
                const double w = g.weight(u, v);
                if (w <= 0.0 || done[static_cast<std::size_t>(v)]) continue;
                const double nd = du + 1.0 / w;
                if (nd < d(v)) {
                    d(v) = nd;
                    pq.emplace(nd, v);
                }
            }
        }
    }
    return dist;
}

/// E = 1/(N(N-1)) Σ_{i≠j} 1/l_ij; unreachable pairs contribute 0.
inline double global_efficiency(const HeadGraph& g)
{
    const std::size_t n = g.nodes();
    if (n < 2) throw ValidationError("global efficiency needs at least 2 nodes");
    const Eigen::MatrixXd l = shortest_path_lengths(g);
    CompensatedSum s;
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        for (Eigen::Index j = 0; j < l.cols(); ++j)
            if (i != j && std::isfinite(l(i, j))) s.add(1.0 / l(i, j));
    return s.value() / static_cast<double>(n * (n - 1));
}

/// Community id per node, contiguous from 0.
struct Partition {
    std::vector<int> community;
    int count = 0;

    /// Relabels in order of first appearance.
    static Partition from_labels(const std::vector<int>& labels)
    {
        Partition p;
        p.community.resize(labels.size());
        std::vector<std::pair<int, int>> seen;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) { return s.first == labels[i]; });
            if (it == seen.end()) {
                seen.emplace_back(labels[i], p.count++);
                p.community[i] = p.count - 1;
            } else {
                p.community[i] = it->second;
            }
        }
        return p;
    }
};

/// Q = (1/2m) Σ_ij (w_ij − d_i d_j / 2m) δ(c_i, c_j).
inline double modularity(const HeadGraph& g, const Partition& p)
{
    const std::size_t n = g.nodes();
    if (p.community.size() != n) throw ValidationError("partition size does not match graph");
    const double two_m = g.twice_total_weight();
    if (!(two_m > 0.0)) throw ValidationError("modularity undefined for a graph with zero total weight");
    std::vector<double> deg(n);
    for (std::size_t i = 0; i < n; ++i) deg[i] = g.degree(i);
    CompensatedSum q;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (p.community[i] == p.community[j]) {
                q.add(g.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - deg[i] * deg[j] / two_m);
            }
    return q.value() / two_m;
}

/// Single-level greedy modularity maximization (one Louvain phase, no
/// aggregation). Nodes are visited in a seeded random order; each moves to
/// the neighbouring (or an empty) community with the largest gain, repeated
/// until no move gains more than 1e-9 in Q. Ties keep the current community.
inline Partition detect_communities(const HeadGraph& g, std::uint64_t seed = 0)
{
    const std::size_t n = g.nodes();
    const double two_m = g.twice_total_weight();
    if (!(two_m > 0.0)) throw ValidationError("community detection needs positive total weight");
    const double m = two_m / 2.0;

    std::vector<int> comm(n);
    std::iota(comm.begin(), comm.end(), 0);
    std::vector<double> deg(n), tot(n);
    std::vector<std::size_t> size(n, 1);
    for (std::size_t i = 0; i < n; ++i) tot[i] = deg[i] = g.degree(i);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> link(n, 0.0);
    std::vector<int> touched;
    bool moved = true;
    while (moved) {
        moved = false;
        for (std::size_t i : order) {
            const int ci = comm[i];
            touched.clear();
            for (std::size_t j = 0; j < n; ++j) {
                const double w = g.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (j == i || w <= 0.0) continue;
                const int cj = comm[j];
                if (link[static_cast<std::size_t>(cj)] == 0.0) touched.push_back(cj);
                link[static_cast<std::size_t>(cj)] += w;
            }
            tot[static_cast<std::size_t>(ci)] -= deg[i];
            --size[static_cast<std::size_t>(ci)];

            // gain of joining community c, up to the common factor 1/m
            auto gain = [&](int c) {
                return link[static_cast<std::size_t>(c)] - tot[static_cast<std::size_t>(c)] * deg[i] / two_m;
            };
            int best = ci;
            double best_gain = gain(ci);
            std::sort(touched.begin(), touched.end());
            for (int c : touched) {
                const double gc = gain(c);
                if (gc > best_gain + 1e-9 * m) {
                    best = c;
                    best_gain = gc;
                }
            }
            if (size[static_cast<std::size_t>(ci)] > 0 && 0.0 > best_gain + 1e-9 * m) {
                // isolate into an empty community
                const auto empty = std::find(size.begin(), size.end(), std::size_t{0});
                best = static_cast<int>(empty - size.begin());
                best_gain = 0.0;
            }
            if (best != ci) moved = true;
            comm[i] = best;
            tot[static_cast<std::size_t>(best)] += deg[i];
            ++size[static_cast<std::size_t>(best)];
            for (int c : touched) link[static_cast<std::size_t>(c)] = 0.0;
        }
    }
    return Partition::from_labels(comm);
}

// ---------------------------------------------------------------------------
// Force-directed layout: repulsion k²/d between all pairs, attraction
// w_ij d²/k along edges, step length capped by a linearly cooled temperature.

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct LayoutOptions {
    double area = 1.0;
    double c = 1.0;
    int iterations = 500;
    double initial_temperature = 0.1; ///< as a fraction of sqrt(area)
    std::uint64_t seed = 0;
};

struct LayoutState {
    std::vector<Point> positions;
    double area = 1.0;
    double c = 1.0;
    double k = 0.0;
    double temperature = 0.0;
    int iterations = 0;
    std::vector<double> temperature_history;
};

inline LayoutState force_layout(const HeadGraph& g, const LayoutOptions& opt, std::vector<Point> initial)
{
    const std::size_t n = g.nodes();
    if (n < 2) throw ValidationError("layout needs at least 2 nodes");
    if (!(opt.area > 0.0)) throw ValidationError("layout area must be positive");
    if (initial.size() != n) throw ValidationError("initial positions do not match node count");

    LayoutState st;
    st.positions = std::move(initial);
    st.area = opt.area;
    st.c = opt.c;
    st.k = opt.c * std::sqrt(opt.area / static_cast<double>(n));
    const double t0 = opt.initial_temperature * std::sqrt(opt.area);
    const double k2 = st.k * st.k;

    std::vector<Point> disp(n);
    for (int it = 0; it < opt.iterations; ++it) {
        st.temperature = t0 * (1.0 - static_cast<double>(it) / static_cast<double>(opt.iterations));
        st.temperature_history.push_back(st.temperature);
        std::fill(disp.begin(), disp.end(), Point{});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double dx = st.positions[i].x - st.positions[j].x;
                double dy = st.positions[i].y - st.positions[j].y;
                double d = std::hypot(dx, dy);
                if (d < 1e-12) {
                    // coincident nodes: separate along a fixed index-dependent direction
                    const double ang = static_cast<double>(i * 7 + j * 13);
                    dx = 1e-9 * std::cos(ang);
                    dy = 1e-9 * std::sin(ang);
                    d = 1e-9;
                }
                const double w = g.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                // net force magnitude along (p_i - p_j): repulsion minus attraction
                const double f = k2 / d - (w > 0.0 ? w * d * d / st.k : 0.0);
                const double fx = f * dx / d, fy = f * dy / d;
                disp[i].x += fx;
                disp[i].y += fy;
                disp[j].x -= fx;
                disp[j].y -= fy;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double len = std::hypot(disp[i].x, disp[i].y);
            if (len <= 0.0) continue;
            const double step = std::min(len, st.temperature);
            st.positions[i].x += disp[i].x / len * step;
            st.positions[i].y += disp[i].y / len * step;
        }
    }
    st.iterations = opt.iterations;
    st.temperature = 0.0;
    return st;
}

/// Seeded uniform initial placement in the square of the given area.
inline std::vector<Point> random_positions(std::size_t n, double area, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, std::sqrt(area));
    std::vector<Point> p(n);
    for (auto& q : p) {
        q.x = u(rng);
        q.y = u(rng);
    }
    return p;
}

inline LayoutState force_layout(const HeadGraph& g, const LayoutOptions& opt = {})
{
    return force_layout(g, opt, random_positions(g.nodes(), opt.area, opt.seed));
}

} // namespace phid
