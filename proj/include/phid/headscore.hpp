#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "phid/netgraph.hpp"
#include "phid/pairs.hpp"
#include "phid/traces.hpp"

namespace phid {

struct HeadScore {
    std::size_t head = 0;
    int layer = 0;
    int head_index = 0;
    double abstract = 0.0; ///< mean syn→syn atom over the head's pairs
    double memory = 0.0;   ///< mean red→red atom over the head's pairs
    double diff = 0.0;     ///< abstract − memory
    std::size_t rank = 0;  ///< 1 = largest diff
    std::size_t pair_count = 0;
};

struct HeadScoreTable {
    std::vector<HeadScore> rows; ///< indexed by head id
    std::size_t layers = 0;
    std::size_t heads_per_layer = 0;

    std::size_t size() const noexcept { return rows.size(); }

    /// Head ids ordered by rank (most abstract first).
    std::vector<std::size_t> by_rank() const
    {
        std::vector<std::size_t> ids(rows.size());
        for (const auto& r : rows) ids[r.rank - 1] = r.head;
        return ids;
    }

    /// Heads whose diff exceeds `threshold` count as abstract.
    std::vector<bool> abstract_mask(double threshold = 0.0) const
    {
        std::vector<bool> m(rows.size());
        for (const auto& r : rows) m[r.head] = r.diff > threshold;
        return m;
    }

    /// Threshold at the given quantile of the diff distribution.
    double quantile_threshold(double q) const
    {
        std::vector<double> d;
        for (const auto& r : rows) d.push_back(r.diff);
        std::sort(d.begin(), d.end());
        const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(d.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = static_cast<std::size_t>(std::ceil(pos));
        return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
    }
};

namespace detail {
inline void assign_ranks(std::vector<HeadScore>& rows)
{
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a].diff > rows[b].diff; });
    for (std::size_t r = 0; r < order.size(); ++r) rows[order[r]].rank = r + 1;
}
} // namespace detail

/// Per-head means of the syn→syn and red→red atoms over every pair the head
/// belongs to. `layer_of_head` supplies the layer metadata.
inline HeadScoreTable score_heads(const PairAtomsTable& table, const std::vector<int>& layer_of_head,
                                  std::size_t heads_per_layer)
{
    if (table.heads < 2) throw ValidationError("need at least 2 heads");
    if (layer_of_head.size() != table.heads) throw ValidationError("layer metadata does not match head count");
    std::vector<CompensatedSum> syn(table.heads), red(table.heads);
    std::vector<std::size_t> count(table.heads, 0);
    for (const auto& p : table.pairs) {
        for (std::size_t h : {p.i, p.j}) {
            syn[h].add(p.atoms.syn_syn());
            red[h].add(p.atoms.red_red());
            ++count[h];
        }
    }
    HeadScoreTable out;
    out.heads_per_layer = heads_per_layer;
    out.layers = layer_of_head.empty() ? 0 : static_cast<std::size_t>(*std::max_element(layer_of_head.begin(), layer_of_head.end())) + 1;
    out.rows.resize(table.heads);
    for (std::size_t h = 0; h < table.heads; ++h) {
        auto& r = out.rows[h];
        r.head = h;
        r.layer = layer_of_head[h];
        r.head_index = heads_per_layer ? static_cast<int>(h % heads_per_layer) : 0;
        r.pair_count = count[h];
        if (count[h]) {
            r.abstract = syn[h].value() / static_cast<double>(count[h]);
            r.memory = red[h].value() / static_cast<double>(count[h]);
        }
        r.diff = r.abstract - r.memory;
    }
    detail::assign_ranks(out.rows);
    return out;
}

/// Decompose every selected pair and score. Gaussian estimation runs on the
/// standardized trace; discrete estimation needs the raw integer values.
inline HeadScoreTable score_heads(const TraceTensor& trace, const PairStrategy& strategy,
                                  const DecomposeOptions& opt = {})
{
    if (trace.steps < TraceTensor::kMinAnalysisSteps) {
        throw ValidationError("trace too short for scoring: " + std::to_string(trace.steps) + " steps");
    }
    if (trace.heads() < 2) throw ValidationError("need at least 2 heads");
    const auto table = opt.phiid.estimator == Estimator::kDiscrete
                           ? pairwise_atoms(trace, strategy, opt)
                           : pairwise_atoms(standardize(trace).trace, strategy, opt);
    return score_heads(table, trace.layer_of_head, trace.heads_per_layer);
}

/// Per-layer mean diff and a least-squares quadratic over layer index.
struct LayerProfile {
    std::vector<double> mean_diff;
    std::array<double, 3> coeffs{}; ///< c0 + c1 l + c2 l²
    int curvature_sign = 0;         ///< sign of c2 (0 when |c2| <= 1e-9)
    double peak_layer = std::numeric_limits<double>::quiet_NaN(); ///< vertex when c2 < 0

    double fitted(double layer) const { return coeffs[0] + coeffs[1] * layer + coeffs[2] * layer * layer; }
};

inline LayerProfile fit_layer_profile(std::vector<double> mean_diff)
{
    const auto n = static_cast<Eigen::Index>(mean_diff.size());
    if (n < 3) throw ValidationError("layer profile needs at least 3 layers");
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index l = 0; l < n; ++l) {
        const double v = static_cast<double>(l);
        x(l, 0) = 1.0;
        x(l, 1) = v;
        x(l, 2) = v * v;
        y(l) = mean_diff[static_cast<std::size_t>(l)];
    }
    const Eigen::Vector3d c = x.colPivHouseholderQr().solve(y);
    LayerProfile p;
    p.mean_diff = std::move(mean_diff);
    p.coeffs = {c(0), c(1), c(2)};
    p.curvature_sign = std::abs(c(2)) <= 1e-9 ? 0 : (c(2) > 0 ? 1 : -1);
    if (p.curvature_sign < 0) p.peak_layer = -c(1) / (2.0 * c(2));
    return p;
}

inline std::vector<double> layer_mean_diff(const HeadScoreTable& s)
{
    std::vector<CompensatedSum> sum(s.layers);
    std::vector<std::size_t> cnt(s.layers, 0);
    for (const auto& r : s.rows) {
        sum[static_cast<std::size_t>(r.layer)].add(r.diff);
        ++cnt[static_cast<std::size_t>(r.layer)];
    }
    std::vector<double> out(s.layers, 0.0);
    for (std::size_t l = 0; l < s.layers; ++l)
        if (cnt[l]) out[l] = sum[l].value() / static_cast<double>(cnt[l]);
    return out;
}

inline LayerProfile layer_profile(const HeadScoreTable& s) { return fit_layer_profile(layer_mean_diff(s)); }

// ---------------------------------------------------------------------------

/// Mean silhouette of a two-group labelling of planar points. A point alone
/// in its group scores 0.
inline double silhouette(const std::vector<Point>& pts, const std::vector<int>& group)
{
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (group[i] < 0) continue;
        double in = 0.0, out = 0.0;
        std::size_t n_in = 0, n_out = 0;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j == i || group[j] < 0) continue;
            const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
            if (group[j] == group[i]) {
                in += d;
                ++n_in;
            } else {
                out += d;
                ++n_out;
            }
        }
        ++counted;
        if (n_in == 0 || n_out == 0) continue;
        const double a = in / static_cast<double>(n_in), b = out / static_cast<double>(n_out);
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

struct SeparationReport {
    double silhouette = 0.0;
    double q = 0.5;
    std::vector<std::size_t> top;    ///< highest-diff heads
    std::vector<std::size_t> bottom; ///< lowest-diff heads
    std::vector<double> layer_mean_diff;
};

struct SeparationComparison {
    SeparationReport easy;
    SeparationReport hard;
    double difference = 0.0; ///< hard − easy silhouette
};

/// Silhouette of the top-q versus bottom-q heads by diff, in layout space.
inline SeparationReport separation_report(const HeadScoreTable& s, const std::vector<Point>& layout, double q)
{
    const std::size_t n = s.size();
    if (layout.size() != n) throw ValidationError("layout does not match head count");
    if (!(q > 0.0 && q <= 0.5)) throw ValidationError("separation fraction q must lie in (0, 0.5]");
    const auto group_size = static_cast<std::size_t>(std::floor(q * static_cast<double>(n) + 1e-9));
    if (group_size < 1) throw ValidationError("q too small for the number of heads");
    SeparationReport r;
    r.q = q;
    const auto ranked = s.by_rank();
    r.top.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(group_size));
    r.bottom.assign(ranked.end() - static_cast<std::ptrdiff_t>(group_size), ranked.end());
    std::vector<int> group(n, -1);
    for (std::size_t h : r.top) group[h] = 0;
    for (std::size_t h : r.bottom) group[h] = 1;
    r.silhouette = silhouette(layout, group);
    r.layer_mean_diff = layer_mean_diff(s);
    return r;
}

inline SeparationComparison separation_statistic(const HeadScoreTable& easy, const HeadScoreTable& hard,
                                                 const std::vector<Point>& layout_easy,
                                                 const std::vector<Point>& layout_hard, double q = 0.5)
{
    if (easy.size() != hard.size() || easy.layers != hard.layers) {
        throw ValidationError("easy and hard score tables cover different head sets");
    }
    for (std::size_t h = 0; h < easy.size(); ++h)
        if (easy.rows[h].layer != hard.rows[h].layer || easy.rows[h].head_index != hard.rows[h].head_index) {
            throw ValidationError("easy and hard score tables cover different head sets");
        }
    SeparationComparison c;
    c.easy = separation_report(easy, layout_easy, q);
    c.hard = separation_report(hard, layout_hard, q);
    c.difference = c.hard.silhouette - c.easy.silhouette;
    return c;
}

} // namespace phid
