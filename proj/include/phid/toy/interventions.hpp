#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "phid/headscore.hpp"
#include "phid/numeric.hpp"
#include "phid/toy/train.hpp"
#include "phid/traces.hpp"

namespace phid::toy {

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

struct Capture {
    TraceTensor heads;      ///< one step per token position, one segment per sequence
    ResidualTrace residual; ///< empty unless requested
};

/// Runs every sequence of `data` and records per-head output norms and,
/// optionally, the full residual stream.
inline Capture capture(const ToyModel& m, const Dataset& data, const Intervention& iv = {}, bool with_residual = false,
                       const std::string& task_label = {})
{
    if (data.size() == 0) throw ValidationError("cannot capture on an empty dataset");
    const auto& c = m.config();
    const std::size_t t_len = c.seq_len(), steps = data.size() * t_len, n = c.total_heads(), d = c.d_model;
    Capture out;
    auto& ht = out.heads;
    ht.steps = steps;
    ht.layers = c.layers;
    ht.heads_per_layer = c.heads;
    ht.layer_of_head = TraceTensor::default_layer_of_head(c.layers, c.heads);
    ht.values.resize(steps * n);
    ht.model_id = "toy-L" + std::to_string(c.layers) + "H" + std::to_string(c.heads) + "d" + std::to_string(d);
    ht.task_label = task_label.empty() ? task_kind_name(c.task.kind) : task_label;
    ht.segment_starts.reserve(data.size());
    for (std::size_t s = 0; s < data.size(); ++s) ht.segment_starts.push_back(s * t_len);
    ht.run_config = {{"toy", c}};
    if (with_residual) {
        out.residual.resize(steps, c.layers, d);
        out.residual.model_id = ht.model_id;
        out.residual.task_label = ht.task_label;
        out.residual.segment_starts = ht.segment_starts;
        out.residual.run_config = ht.run_config;
    }
    for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
        const std::size_t e = std::min(data.size(), b + kEvalChunk);
        const auto f = m.forward(data.rows(b, e), e - b, iv);
        const std::size_t row0 = b * t_len;
        for (Index r = 0; r < f.head_norms.rows(); ++r)
            for (Index i = 0; i < f.head_norms.cols(); ++i)
                ht.values[(row0 + static_cast<std::size_t>(r)) * n + static_cast<std::size_t>(i)] = f.head_norms(r, i);
        if (!with_residual) continue;
        auto& rt = out.residual;
        for (Index r = 0; r < f.head_norms.rows(); ++r) {
            const std::size_t t = row0 + static_cast<std::size_t>(r);
            for (std::size_t l = 0; l <= c.layers; ++l) {
                const Eigen::RowVectorXd hr = f.h[l].row(r);
                std::copy_n(hr.data(), d, rt.h.data() + (t * (c.layers + 1) + l) * d);
            }
            for (std::size_t l = 0; l < c.layers; ++l) {
                if (f.layers[l].skipped) continue;
                const Eigen::RowVectorXd a = f.layers[l].a.row(r), mm = f.layers[l].m.row(r);
                std::copy_n(a.data(), d, rt.a.data() + (t * c.layers + l) * d);
                std::copy_n(mm.data(), d, rt.m.data() + (t * c.layers + l) * d);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline double dot(const double* x, const double* y, std::size_t d)
{
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += x[k] * y[k];
    return s;
}

/// Cosine, or nullopt when either vector has zero norm.
inline std::optional<double> cosine(const double* x, const double* y, std::size_t d)
{
    const double nx = std::sqrt(dot(x, x, d)), ny = std::sqrt(dot(y, y, d));
    if (nx == 0.0 || ny == 0.0) return std::nullopt;
    return dot(x, y, d) / (nx * ny);
}

struct MeanCounter {
    CompensatedSum sum;
    std::size_t used = 0;
    std::size_t skipped = 0;

    void add(std::optional<double> v)
    {
        if (v) {
            sum.add(*v);
            ++used;
        } else {
            ++skipped;
        }
    }
    double mean() const { return used ? sum.value() / static_cast<double>(used) : kUndefined; }
};

} // namespace detail

/// Mean cosine of each sub-layer's write against the stream it reads.
struct CosineProfile {
    std::vector<double> attention; ///< cos(a_l, h_l)
    std::vector<double> mlp;       ///< cos(m_l, h_l + a_l)
    std::vector<double> layer;     ///< cos(h_{l+1} - h_l, h_l)
    std::vector<std::size_t> skipped_terms;
};

inline CosineProfile cosine_contributions(const ResidualTrace& rt)
{
    rt.validate();
    const std::size_t L = rt.layers, d = rt.d_model;
    std::vector<detail::MeanCounter> att(L), mlp(L), lay(L);
    std::vector<double> hhat(d), delta(d);
    for (std::size_t t = 0; t < rt.steps; ++t)
        for (std::size_t l = 0; l < L; ++l) {
            const double *h = rt.h_at(t, l), *h1 = rt.h_at(t, l + 1), *a = rt.a_at(t, l), *m = rt.m_at(t, l);
            for (std::size_t k = 0; k < d; ++k) {
                hhat[k] = h[k] + a[k];
                delta[k] = h1[k] - h[k];
            }
            att[l].add(detail::cosine(a, h, d));
            mlp[l].add(detail::cosine(m, hhat.data(), d));
            lay[l].add(detail::cosine(delta.data(), h, d));
        }
    CosineProfile p;
    for (std::size_t l = 0; l < L; ++l) {
        p.attention.push_back(att[l].mean());
        p.mlp.push_back(mlp[l].mean());
        p.layer.push_back(lay[l].mean());
        p.skipped_terms.push_back(att[l].skipped + mlp[l].skipped + lay[l].skipped);
    }
    return p;
}

/// energy[l] = mean over steps of (‖h_{l+1}‖ / ‖h_l‖)(1 − cos(h_{l+1}, h_l)).
struct EnergyProfile {
    std::vector<double> energy;
    std::vector<std::size_t> skipped_steps;
};

inline EnergyProfile energy_profile(const ResidualTrace& rt)
{
    rt.validate();
    const std::size_t L = rt.layers, d = rt.d_model;
    std::vector<detail::MeanCounter> e(L);
    for (std::size_t t = 0; t < rt.steps; ++t)
        for (std::size_t l = 0; l < L; ++l) {
            const double *prev = rt.h_at(t, l), *cur = rt.h_at(t, l + 1);
            const double np = std::sqrt(detail::dot(prev, prev, d)), nc = std::sqrt(detail::dot(cur, cur, d));
            if (np == 0.0) {
                e[l].add(std::nullopt);
                continue;
            }
            const double cos = nc == 0.0 ? 0.0 : detail::dot(prev, cur, d) / (np * nc);
            e[l].add((nc / np) * (1.0 - cos));
        }
    EnergyProfile p;
    for (const auto& x : e) {
        p.energy.push_back(x.mean());
        p.skipped_steps.push_back(x.skipped);
    }
    return p;
}

// ---------------------------------------------------------------------------

/// Relative change of each later layer's write when layer s is skipped:
/// ‖Δ_l − Δ̄_l‖ / ‖Δ_l‖ with Δ_l = h_{l+1} − h_l, averaged over token steps.
/// Entries l <= s are undefined (NaN), as are layers whose writes are all zero.
struct SkipDisturbance {
    std::size_t skipped_layer = 0;
    std::vector<double> disturbance;
    std::vector<std::size_t> undefined_steps;

    /// Mean over the defined downstream layers; NaN when there are none.
    double mean_downstream() const
    {
        CompensatedSum s;
        std::size_t n = 0;
        for (std::size_t l = skipped_layer + 1; l < disturbance.size(); ++l)
            if (!std::isnan(disturbance[l])) {
                s.add(disturbance[l]);
                ++n;
            }
        return n ? s.value() / static_cast<double>(n) : kUndefined;
    }
};

inline SkipDisturbance skip_disturbance(const ToyModel& m, const Dataset& data, std::size_t s)
{
    const std::size_t L = m.config().layers;
    if (s >= L) throw ValidationError("skip layer " + std::to_string(s) + " out of range for " + std::to_string(L) + " layers");
    if (data.size() == 0) throw ValidationError("cannot measure disturbance on an empty dataset");
    std::vector<detail::MeanCounter> acc(L);
    for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
        const std::size_t e = std::min(data.size(), b + kEvalChunk);
        const auto full = m.forward(data.rows(b, e), e - b);
        const auto cut = m.forward(data.rows(b, e), e - b, Intervention::skip(s));
        for (std::size_t l = s + 1; l < L; ++l) {
            const MatrixXd dfull = full.h[l + 1] - full.h[l];
            const MatrixXd dcut = cut.h[l + 1] - cut.h[l];
            const VectorXd den = dfull.rowwise().norm();
            const VectorXd num = (dfull - dcut).rowwise().norm();
            for (Index r = 0; r < den.size(); ++r)
                acc[l].add(den(r) > 0.0 ? std::optional<double>(num(r) / den(r)) : std::nullopt);
        }
    }
    SkipDisturbance out;
    out.skipped_layer = s;
    for (std::size_t l = 0; l < L; ++l) {
        out.disturbance.push_back(l > s ? acc[l].mean() : kUndefined);
        out.undefined_steps.push_back(acc[l].skipped);
    }
    return out;
}

// ---------------------------------------------------------------------------

enum class AblationOrder { kAbstractFirst, kMemoryFirst, kRandom };

inline const char* ablation_order_name(AblationOrder o)
{
    switch (o) {
    case AblationOrder::kAbstractFirst: return "abs_first";
    case AblationOrder::kMemoryFirst: return "mem_first";
    default: return "random";
    }
}

/// Head ids in the order they are removed.
inline std::vector<std::size_t> ablation_sequence(const HeadScoreTable& scores, AblationOrder order, std::uint64_t seed)
{
    auto ids = scores.by_rank();
    if (order == AblationOrder::kMemoryFirst) std::reverse(ids.begin(), ids.end());
    if (order == AblationOrder::kRandom) {
        std::mt19937_64 rng(seed);
        std::shuffle(ids.begin(), ids.end(), rng);
    }
    return ids;
}

struct AblationPoint {
    std::size_t k = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double loss_ratio = 1.0; ///< loss / baseline loss
};

/// Zeroes the first k heads of the chosen order for each k and evaluates.
inline std::vector<AblationPoint> ablate_and_eval(const ToyModel& m, const HeadScoreTable& scores, AblationOrder order,
                                                  const std::vector<std::size_t>& ks, const Dataset& eval,
                                                  std::uint64_t seed = 0)
{
    const std::size_t n = m.config().total_heads();
    if (scores.size() != n) throw ValidationError("score table does not match the model's head count");
    for (std::size_t k : ks)
        if (k > n) throw ValidationError("cannot ablate " + std::to_string(k) + " of " + std::to_string(n) + " heads");
    const auto seq = ablation_sequence(scores, order, seed);
    const double base = evaluate(m, eval).loss;
    std::vector<AblationPoint> out;
    for (std::size_t k : ks) {
        const auto r = evaluate(m, eval, Intervention::ablate({seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(k)}));
        out.push_back({k, r.loss, r.accuracy, base > 0.0 ? r.loss / base : kUndefined});
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Riemann-sum integrated gradients along the straight path from `baseline`
/// to `x`. `grad(points)` returns ∂F at each point.
template <class GradFn>
MatrixXd integrated_gradients(const MatrixXd& x, const MatrixXd& baseline, std::size_t m_steps, GradFn&& grad)
{
    if (m_steps < 8) throw ValidationError("integrated gradients needs at least 8 steps");
    if (x.rows() != baseline.rows() || x.cols() != baseline.cols()) throw ValidationError("baseline shape differs from input");
    std::vector<MatrixXd> points;
    points.reserve(m_steps);
    for (std::size_t k = 1; k <= m_steps; ++k)
        points.push_back(baseline + (static_cast<double>(k) / static_cast<double>(m_steps)) * (x - baseline));
    const std::vector<MatrixXd> g = grad(points);
    MatrixXd avg = MatrixXd::Zero(x.rows(), x.cols());
    for (const auto& gi : g) avg += gi;
    avg /= static_cast<double>(m_steps);
    return (x - baseline).cwiseProduct(avg);
}

struct IgResult {
    MatrixXd attribution; ///< T x d_model
    int target = 0;
    double f_input = 0.0;
    double f_baseline = 0.0;

    /// |Σ IG − (F(x) − F(x'))| / |F(x) − F(x')|
    double completeness_residual() const
    {
        const double delta = f_input - f_baseline;
        return std::abs(attribution.sum() - delta) / std::abs(delta);
    }

    /// Attribution summed over positions, one value per embedding dimension.
    Eigen::RowVectorXd per_dimension() const { return attribution.colwise().sum(); }
};

/// IG of the target logit at the final position with respect to the input
/// embedding h_0. The baseline zeroes the token embeddings and keeps the
/// positional ones, so every path point stays away from the RMSNorm origin.
inline IgResult integrated_gradients(const ToyModel& m, std::span<const int> tokens, int target, std::size_t m_steps)
{
    const std::size_t t_len = m.config().seq_len();
    if (tokens.size() != t_len) throw ValidationError("integrated gradients takes one sequence");
    if (target < 0 || static_cast<std::size_t>(target) >= m.config().vocab()) throw ValidationError("target class out of range");
    const MatrixXd x = m.embed(tokens, 1);
    const MatrixXd base = view(m.params(), m.layout().pos).topRows(static_cast<Index>(t_len));
    const auto T = static_cast<Index>(t_len);

    auto logit = [&](const MatrixXd& h0) { return m.forward_embedded(h0, 1).logits(0, target); };
    auto grad = [&](const std::vector<MatrixXd>& pts) {
        std::vector<MatrixXd> out;
        for (std::size_t b = 0; b < pts.size(); b += kEvalChunk) {
            const std::size_t e = std::min(pts.size(), b + kEvalChunk);
            MatrixXd h0(static_cast<Index>((e - b) * t_len), x.cols());
            for (std::size_t i = b; i < e; ++i) h0.middleRows(static_cast<Index>(i - b) * T, T) = pts[i];
            const auto f = m.forward_embedded(h0, e - b);
            MatrixXd dlogits = MatrixXd::Zero(f.logits.rows(), f.logits.cols());
            dlogits.col(target).setOnes();
            MatrixXd dh0;
            m.backward(f, {}, dlogits, {}, nullptr, &dh0);
            for (std::size_t i = b; i < e; ++i) out.push_back(dh0.middleRows(static_cast<Index>(i - b) * T, T));
        }
        return out;
    };
    IgResult r;
    r.target = target;
    r.attribution = integrated_gradients(x, base, m_steps, grad);
    r.f_input = logit(x);
    r.f_baseline = logit(base);
    return r;
}

} // namespace phid::toy
