#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "phid/toy/config.hpp"

namespace phid::toy {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A matrix-shaped slice of the flat parameter vector (column-major).
struct Block {
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const noexcept { return rows * cols; }
};

struct LayerBlocks {
    Block g1, wq, wk, wv, wo; // attention: gain, projections (d x d), output (d x d)
    Block g2, w1, b1, w2, b2; // MLP: gain, d x d_mlp, 1 x d_mlp, d_mlp x d, 1 x d
};

struct ParamLayout {
    Block embed; ///< V x d
    Block pos;   ///< T x d
    std::vector<LayerBlocks> layers;
    Block gf;   ///< 1 x d
    Block wout; ///< d x V
    std::size_t total = 0;

    explicit ParamLayout(const ToyConfig& c)
    {
        const std::size_t d = c.d_model;
        auto take = [this](std::size_t r, std::size_t k) {
            Block b{total, r, k};
            total += r * k;
            return b;
        };
        embed = take(c.vocab(), d);
        pos = take(c.seq_len(), d);
        layers.resize(c.layers);
        for (auto& l : layers) {
            l.g1 = take(1, d);
            l.wq = take(d, d);
            l.wk = take(d, d);
            l.wv = take(d, d);
            l.wo = take(d, d);
            l.g2 = take(1, d);
            l.w1 = take(d, c.d_mlp);
            l.b1 = take(1, c.d_mlp);
            l.w2 = take(c.d_mlp, d);
            l.b2 = take(1, d);
        }
        gf = take(1, d);
        wout = take(d, c.vocab());
    }
};

inline Eigen::Map<MatrixXd> view(VectorXd& v, const Block& b)
{
    return {v.data() + b.offset, static_cast<Index>(b.rows), static_cast<Index>(b.cols)};
}

inline Eigen::Map<const MatrixXd> view(const VectorXd& v, const Block& b)
{
    return {v.data() + b.offset, static_cast<Index>(b.rows), static_cast<Index>(b.cols)};
}

/// Skip one layer (h_{s+1} = h_s) and/or silence a set of heads by zeroing
/// their output before the output projection.
struct Intervention {
    std::optional<std::size_t> skip_layer;
    std::vector<std::size_t> ablated_heads; ///< global ids, layer-major

    static Intervention none() { return {}; }
    static Intervention skip(std::size_t s) { return {s, {}}; }
    static Intervention ablate(std::vector<std::size_t> heads) { return {std::nullopt, std::move(heads)}; }

    void validate(const ToyConfig& c) const
    {
        if (skip_layer && *skip_layer >= c.layers) {
            throw ValidationError("skip layer " + std::to_string(*skip_layer) + " out of range for " +
                                  std::to_string(c.layers) + " layers");
        }
        for (std::size_t h : ablated_heads)
            if (h >= c.total_heads()) throw ValidationError("ablated head id " + std::to_string(h) + " out of range");
    }

    std::vector<bool> mask(const ToyConfig& c) const
    {
        std::vector<bool> m(c.total_heads(), false);
        for (std::size_t h : ablated_heads) m[h] = true;
        return m;
    }
};

inline double gelu(double u)
{
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    return 0.5 * u * (1.0 + std::tanh(c * (u + 0.044715 * u * u * u)));
}

inline double gelu_grad(double u)
{
    constexpr double c = 0.7978845608028654;
    const double t = std::tanh(c * (u + 0.044715 * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * u * u);
}

namespace detail {

/// Writes 0.5 u (1 + tanh(c (u + 0.044715 u³))) into `act` and the tanh
/// factor into `th`, using the vectorized exponential.
inline void gelu_forward(const MatrixXd& u, MatrixXd& th, MatrixXd& act)
{
    constexpr double c = 0.7978845608028654;
    th.resize(u.rows(), u.cols());
    act.resize(u.rows(), u.cols());
    th.array() = 2.0 * c * (u.array() + 0.044715 * u.array().cube());
    th.array() = 1.0 - 2.0 / (th.array().exp() + 1.0);
    act.array() = 0.5 * u.array() * (1.0 + th.array());
}

/// du ⊙= gelu'(u), given the cached tanh factor.
inline void gelu_backward(const MatrixXd& u, const MatrixXd& th, MatrixXd& du)
{
    constexpr double c = 0.7978845608028654;
    du.array() *= 0.5 * (1.0 + th.array()) +
                  0.5 * u.array() * (1.0 - th.array().square()) * c * (1.0 + 3.0 * 0.044715 * u.array().square());
}

/// y = g ⊙ x / sqrt(mean(x²) + eps), row-wise; r holds the inverse RMS per row.
template <class X>
void rms_norm(const X& x, const Eigen::Map<const MatrixXd>& g, double eps, MatrixXd& y, VectorXd& r)
{
    r = ((x.array().square().rowwise().sum() / static_cast<double>(x.cols())) + eps).rsqrt();
    y.resize(x.rows(), x.cols());
    y.array() = (x.array().colwise() * r.array()).rowwise() * g.row(0).array();
}

/// dx = ∂/∂x of the norm applied to dy; accumulates the gain gradient when dg is set.
template <class X>
void rms_norm_backward(const MatrixXd& dy, const X& x, const VectorXd& r, const Eigen::Map<const MatrixXd>& g,
                       Eigen::Map<MatrixXd>* dg, MatrixXd& gy, VectorXd& coef, MatrixXd& dx)
{
    if (dg) dg->row(0) += (dy.array() * (x.array().colwise() * r.array())).colwise().sum().matrix();
    gy.resize(dy.rows(), dy.cols());
    gy.array() = dy.array().rowwise() * g.row(0).array();
    coef = r.array().cube() * (gy.array() * x.array()).rowwise().sum() / static_cast<double>(x.cols());
    dx.resize(dy.rows(), dy.cols());
    dx.array() = gy.array().colwise() * r.array() - x.array().colwise() * coef.array();
}

} // namespace detail

struct LayerCache {
    bool skipped = false;
    MatrixXd n1, q, k, v, z, a, hhat, n2, u, th, act, m;
    VectorXd r1, r2;
    MatrixXd probs; ///< [(b * H + head) * T + t] x T, causal softmax rows
};

/// Everything one forward pass computes for a batch of B sequences of
/// length T. Activations are [B*T x width] with row b*T + t. Reusing one
/// instance across calls keeps its buffers.
struct ForwardPass {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::vector<MatrixXd> h; ///< L + 1 residual states
    std::vector<LayerCache> layers;
    MatrixXd last;       ///< h_L at the final position, B x d
    MatrixXd nf;         ///< Norm(h_L) at the final position
    VectorXd rf;
    MatrixXd logits;     ///< B x V, final position
    MatrixXd head_norms; ///< B*T x (L*H), ‖z‖ per head and position
};

/// Reusable buffers for the reverse pass.
struct BackwardScratch {
    MatrixXd dh, dhhat, du, dn, dx, dz, dq, dk, dv, gy, dlast, dnf, dp, ds;
    VectorXd coef, rowdot;
};

class ToyModel {
public:
    explicit ToyModel(ToyConfig c)
        : cfg_(std::move(c)), layout_((cfg_.validate(), cfg_)), params_(VectorXd::Zero(static_cast<Index>(layout_.total)))
    {
    }

    /// Gaussian init: embeddings and projections at init_std, output projections
    /// scaled by 1/sqrt(2L), gains at 1, biases at 0.
    static ToyModel initialized(const ToyConfig& c)
    {
        ToyModel m(c);
        std::mt19937_64 rng(c.seed);
        std::normal_distribution<double> n(0.0, c.init_std);
        const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(c.layers));
        auto fill = [&](const Block& b, double scale) {
            auto v = view(m.params_, b);
            for (Index j = 0; j < v.cols(); ++j)
                for (Index i = 0; i < v.rows(); ++i) v(i, j) = scale * n(rng);
        };
        auto ones = [&](const Block& b) { view(m.params_, b).setOnes(); };
        fill(m.layout_.embed, 1.0);
        fill(m.layout_.pos, 1.0);
        for (const auto& l : m.layout_.layers) {
            ones(l.g1);
            fill(l.wq, 1.0);
            fill(l.wk, 1.0);
            fill(l.wv, 1.0);
            fill(l.wo, out_scale);
            ones(l.g2);
            fill(l.w1, 1.0);
            fill(l.w2, out_scale);
        }
        ones(m.layout_.gf);
        fill(m.layout_.wout, 1.0);
        return m;
    }

    const ToyConfig& config() const noexcept { return cfg_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    VectorXd& params() noexcept { return params_; }
    const VectorXd& params() const noexcept { return params_; }

    /// h_0 = E[token] + P[position].
    void embed(std::span<const int> tokens, std::size_t batch, MatrixXd& h0) const
    {
        const std::size_t t_len = cfg_.seq_len();
        if (tokens.size() != batch * t_len) {
            throw ValidationError("token block has " + std::to_string(tokens.size()) + " ids, expected " +
                                  std::to_string(batch * t_len));
        }
        const auto e = view(params_, layout_.embed);
        const auto p = view(params_, layout_.pos);
        h0.resize(static_cast<Index>(tokens.size()), static_cast<Index>(cfg_.d_model));
        for (std::size_t r = 0; r < tokens.size(); ++r) {
            const int tok = tokens[r];
            if (tok < 0 || static_cast<std::size_t>(tok) >= cfg_.vocab()) {
                throw ValidationError("token id " + std::to_string(tok) + " out of range for vocab " +
                                      std::to_string(cfg_.vocab()));
            }
            h0.row(static_cast<Index>(r)) = e.row(tok) + p.row(static_cast<Index>(r % t_len));
        }
    }

    MatrixXd embed(std::span<const int> tokens, std::size_t batch) const
    {
        MatrixXd h0;
        embed(tokens, batch, h0);
        return h0;
    }

    ForwardPass forward(std::span<const int> tokens, std::size_t batch, const Intervention& iv = {}) const
    {
        ForwardPass f;
        forward(tokens, batch, iv, f);
        return f;
    }

    void forward(std::span<const int> tokens, std::size_t batch, const Intervention& iv, ForwardPass& f) const
    {
        f.h.resize(cfg_.layers + 1);
        embed(tokens, batch, f.h[0]);
        run(batch, iv, f);
    }

    ForwardPass forward_embedded(const MatrixXd& h0, std::size_t batch, const Intervention& iv = {}) const
    {
        ForwardPass f;
        f.h.resize(cfg_.layers + 1);
        f.h[0] = h0;
        run(batch, iv, f);
        return f;
    }

    /// Reverse pass from dLoss/dlogits. Accumulates into `dparams` (same layout
    /// as params()) when non-null and leaves dLoss/dh_0 in `scratch.dh`.
    void backward(const ForwardPass& f, std::span<const int> tokens, const MatrixXd& dlogits, const Intervention& iv,
                  VectorXd* dparams, BackwardScratch& s) const
    {
        const std::size_t nh = cfg_.heads, width = cfg_.d_head(), L = cfg_.layers, t_len = f.seq;
        const double scale = 1.0 / std::sqrt(static_cast<double>(width));
        const auto T = static_cast<Index>(t_len), D = static_cast<Index>(width);
        const auto ablated = iv.mask(cfg_);
        const bool want = dparams != nullptr;
        if (want && static_cast<std::size_t>(dparams->size()) != layout_.total) dparams->setZero(static_cast<Index>(layout_.total));
        // Maps into the gradient vector only exist when it does.
        auto gview = [&](const Block& b) { return view(*dparams, b); };

        if (want) gview(layout_.wout).noalias() += f.nf.transpose() * dlogits;
        s.dnf.noalias() = dlogits * view(params_, layout_.wout).transpose();
        if (want) {
            auto dgf = gview(layout_.gf);
            detail::rms_norm_backward(s.dnf, f.last, f.rf, view(params_, layout_.gf), &dgf, s.gy, s.coef, s.dlast);
        } else {
            detail::rms_norm_backward(s.dnf, f.last, f.rf, view(params_, layout_.gf), nullptr, s.gy, s.coef, s.dlast);
        }
        s.dh.setZero(f.h[L].rows(), f.h[L].cols());
        for (std::size_t b = 0; b < f.batch; ++b) s.dh.row(static_cast<Index>((b + 1) * t_len - 1)) = s.dlast.row(static_cast<Index>(b));

        for (std::size_t li = L; li-- > 0;) {
            const auto& c = f.layers[li];
            if (c.skipped) continue;
            const auto& lb = layout_.layers[li];
            // MLP: h' = hhat + gelu(Norm(hhat) W1 + b1) W2 + b2
            if (want) {
                gview(lb.w2).noalias() += c.act.transpose() * s.dh;
                gview(lb.b2).row(0) += s.dh.colwise().sum();
            }
            s.du.noalias() = s.dh * view(params_, lb.w2).transpose();
            detail::gelu_backward(c.u, c.th, s.du);
            if (want) {
                gview(lb.w1).noalias() += c.n2.transpose() * s.du;
                gview(lb.b1).row(0) += s.du.colwise().sum();
            }
            s.dn.noalias() = s.du * view(params_, lb.w1).transpose();
            if (want) {
                auto dg2 = gview(lb.g2);
                detail::rms_norm_backward(s.dn, c.hhat, c.r2, view(params_, lb.g2), &dg2, s.gy, s.coef, s.dx);
            } else {
                detail::rms_norm_backward(s.dn, c.hhat, c.r2, view(params_, lb.g2), nullptr, s.gy, s.coef, s.dx);
            }
            s.dhhat = s.dh + s.dx;

            // attention: hhat = h + z Wo
            if (want) gview(lb.wo).noalias() += c.z.transpose() * s.dhhat;
            s.dz.noalias() = s.dhhat * view(params_, lb.wo).transpose();
            s.dq.setZero(s.dz.rows(), s.dz.cols());
            s.dk.setZero(s.dz.rows(), s.dz.cols());
            s.dv.setZero(s.dz.rows(), s.dz.cols());
            s.dp.resize(T, T);
            s.ds.resize(T, T);
            for (std::size_t b = 0; b < f.batch; ++b) {
                const auto row0 = static_cast<Index>(b * t_len);
                for (std::size_t j = 0; j < nh; ++j) {
                    if (ablated[li * nh + j]) continue;
                    const auto col0 = static_cast<Index>(j * width);
                    const auto p = c.probs.middleRows(static_cast<Index>((b * nh + j) * t_len), T);
                    const auto dzb = s.dz.block(row0, col0, T, D);
                    s.dv.block(row0, col0, T, D).noalias() = p.transpose().lazyProduct(dzb);
                    s.dp.noalias() = dzb.lazyProduct(c.v.block(row0, col0, T, D).transpose());
                    s.rowdot = (s.dp.array() * p.array()).rowwise().sum();
                    s.ds = (p.array() * (s.dp.array().colwise() - s.rowdot.array())).matrix() * scale;
                    s.dq.block(row0, col0, T, D).noalias() = s.ds.lazyProduct(c.k.block(row0, col0, T, D));
                    s.dk.block(row0, col0, T, D).noalias() = s.ds.transpose().lazyProduct(c.q.block(row0, col0, T, D));
                }
            }
            if (want) {
                gview(lb.wq).noalias() += c.n1.transpose() * s.dq;
                gview(lb.wk).noalias() += c.n1.transpose() * s.dk;
                gview(lb.wv).noalias() += c.n1.transpose() * s.dv;
            }
            s.dn.noalias() = s.dq * view(params_, lb.wq).transpose();
            s.dn.noalias() += s.dk * view(params_, lb.wk).transpose();
            s.dn.noalias() += s.dv * view(params_, lb.wv).transpose();
            if (want) {
                auto dg1 = gview(lb.g1);
                detail::rms_norm_backward(s.dn, f.h[li], c.r1, view(params_, lb.g1), &dg1, s.gy, s.coef, s.dx);
            } else {
                detail::rms_norm_backward(s.dn, f.h[li], c.r1, view(params_, lb.g1), nullptr, s.gy, s.coef, s.dx);
            }
            s.dh = s.dhhat + s.dx;
        }

        if (want && !tokens.empty()) {
            auto de = gview(layout_.embed);
            auto dp = gview(layout_.pos);
            for (std::size_t r = 0; r < tokens.size(); ++r) {
                de.row(tokens[r]) += s.dh.row(static_cast<Index>(r));
                dp.row(static_cast<Index>(r % t_len)) += s.dh.row(static_cast<Index>(r));
            }
        }
    }

    void backward(const ForwardPass& f, std::span<const int> tokens, const MatrixXd& dlogits, const Intervention& iv,
                  VectorXd* dparams, MatrixXd* dh0 = nullptr) const
    {
        BackwardScratch s;
        backward(f, tokens, dlogits, iv, dparams, s);
        if (dh0) *dh0 = std::move(s.dh);
    }

private:
    void run(std::size_t batch, const Intervention& iv, ForwardPass& f) const
    {
        iv.validate(cfg_);
        const std::size_t t_len = cfg_.seq_len();
        if (static_cast<std::size_t>(f.h[0].rows()) != batch * t_len || static_cast<std::size_t>(f.h[0].cols()) != cfg_.d_model) {
            throw ValidationError("input block does not match the model's sequence length and width");
        }
        const std::size_t nh = cfg_.heads, dh = cfg_.d_head(), L = cfg_.layers;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        const auto ablated = iv.mask(cfg_);
        const auto T = static_cast<Index>(t_len), D = static_cast<Index>(dh);

        f.batch = batch;
        f.seq = t_len;
        f.layers.resize(L);
        f.head_norms.setZero(f.h[0].rows(), static_cast<Index>(L * nh));

        for (std::size_t l = 0; l < L; ++l) {
            const auto& lb = layout_.layers[l];
            auto& c = f.layers[l];
            const MatrixXd& h = f.h[l];
            c.skipped = iv.skip_layer && *iv.skip_layer == l;
            if (c.skipped) {
                f.h[l + 1] = h;
                continue;
            }
            detail::rms_norm(h, view(params_, lb.g1), cfg_.norm_eps, c.n1, c.r1);
            c.q.noalias() = c.n1 * view(params_, lb.wq);
            c.k.noalias() = c.n1 * view(params_, lb.wk);
            c.v.noalias() = c.n1 * view(params_, lb.wv);
            c.z.setZero(h.rows(), h.cols());
            c.probs.setZero(static_cast<Index>(batch * nh * t_len), T);
            for (std::size_t b = 0; b < batch; ++b) {
                const auto row0 = static_cast<Index>(b * t_len);
                for (std::size_t j = 0; j < nh; ++j) {
                    const auto col0 = static_cast<Index>(j * dh);
                    auto p = c.probs.middleRows(static_cast<Index>((b * nh + j) * t_len), T);
                    p.noalias() = c.q.block(row0, col0, T, D).lazyProduct(c.k.block(row0, col0, T, D).transpose());
                    for (Index t = 0; t < T; ++t) {
                        const double mx = p.row(t).head(t + 1).maxCoeff() * scale;
                        double sum = 0.0;
                        for (Index u = 0; u <= t; ++u) sum += (p(t, u) = std::exp(p(t, u) * scale - mx));
                        p.row(t).head(t + 1) /= sum;
                        p.row(t).tail(T - t - 1).setZero();
                    }
                    if (!ablated[l * nh + j]) c.z.block(row0, col0, T, D).noalias() = p.lazyProduct(c.v.block(row0, col0, T, D));
                }
            }
            for (std::size_t j = 0; j < nh; ++j)
                f.head_norms.col(static_cast<Index>(l * nh + j)) = c.z.middleCols(static_cast<Index>(j * dh), D).rowwise().norm();
            c.a.noalias() = c.z * view(params_, lb.wo);
            c.hhat = h + c.a;
            detail::rms_norm(c.hhat, view(params_, lb.g2), cfg_.norm_eps, c.n2, c.r2);
            c.u.noalias() = c.n2 * view(params_, lb.w1);
            c.u.rowwise() += view(params_, lb.b1).row(0);
            detail::gelu_forward(c.u, c.th, c.act);
            c.m.noalias() = c.act * view(params_, lb.w2);
            c.m.rowwise() += view(params_, lb.b2).row(0);
            f.h[l + 1] = c.hhat + c.m;
        }

        f.last.resize(static_cast<Index>(batch), static_cast<Index>(cfg_.d_model));
        for (std::size_t b = 0; b < batch; ++b) f.last.row(static_cast<Index>(b)) = f.h[L].row(static_cast<Index>((b + 1) * t_len - 1));
        detail::rms_norm(f.last, view(params_, layout_.gf), cfg_.norm_eps, f.nf, f.rf);
        f.logits.noalias() = f.nf * view(params_, layout_.wout);
    }

    ToyConfig cfg_;
    ParamLayout layout_;
    VectorXd params_;
};

/// Mean cross-entropy of the final-position logits. Writes dLoss/dlogits
/// when `dlogits` is non-null.
inline double cross_entropy(const MatrixXd& logits, std::span<const int> targets, MatrixXd* dlogits = nullptr)
{
    const Index b = logits.rows();
    double loss = 0.0;
    if (dlogits) dlogits->resize(b, logits.cols());
    for (Index i = 0; i < b; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
        const double z = e.sum();
        loss += std::log(z) + mx - logits(i, targets[static_cast<std::size_t>(i)]);
        if (dlogits) {
            dlogits->row(i) = e / z;
            (*dlogits)(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
        }
    }
    if (dlogits) *dlogits /= static_cast<double>(b);
    return loss / static_cast<double>(b);
}

inline std::size_t correct_count(const MatrixXd& logits, std::span<const int> targets)
{
    std::size_t n = 0;
    for (Index i = 0; i < logits.rows(); ++i) {
        Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        if (arg == targets[static_cast<std::size_t>(i)]) ++n;
    }
    return n;
}

} // namespace phid::toy
