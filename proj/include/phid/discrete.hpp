#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "phid/error.hpp"
#include "phid/numeric.hpp"

namespace phid {

/// Probability mass function over a product of finite alphabets, stored
/// row-major (last axis fastest).
class DiscretePmf {
public:
    DiscretePmf() = default;

    DiscretePmf(std::vector<std::size_t> dims, std::vector<double> probs)
        : dims_(std::move(dims)), probs_(std::move(probs))
    {
        validate();
    }

    /// Normalizes non-negative counts. Throws on an all-zero table.
    static DiscretePmf from_counts(std::vector<std::size_t> dims, std::span<const double> counts)
    {
        CompensatedSum total;
        for (double c : counts) {
            if (!(c >= 0.0) || !std::isfinite(c)) throw ValidationError("negative or non-finite count");
            total.add(c);
        }
        const double n = total.value();
        if (n <= 0.0) throw ValidationError("empty count table");
        std::vector<double> probs(counts.size());
        std::transform(counts.begin(), counts.end(), probs.begin(), [n](double c) { return c / n; });
        return DiscretePmf(std::move(dims), std::move(probs));
    }

    std::span<const std::size_t> dims() const noexcept { return dims_; }
    std::span<const double> probs() const noexcept { return probs_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return probs_.size(); }

    /// Marginal over `axes`, with the result's axes in the order given.
    DiscretePmf marginal(std::span<const std::size_t> axes) const
    {
        std::vector<std::size_t> out_dims;
        for (std::size_t a : axes) {
            if (a >= rank()) throw ValidationError("marginal axis out of range");
            out_dims.push_back(dims_[a]);
        }
        const std::size_t out_size = std::accumulate(out_dims.begin(), out_dims.end(), std::size_t{1},
                                                     std::multiplies<>());
        std::vector<CompensatedSum> acc(out_size);
        std::vector<std::size_t> idx(rank(), 0);
        for (std::size_t flat = 0; flat < probs_.size(); ++flat) {
            std::size_t o = 0;
            for (std::size_t k = 0; k < axes.size(); ++k) o = o * out_dims[k] + idx[axes[k]];
            acc[o].add(probs_[flat]);
            for (std::size_t k = rank(); k-- > 0;) {
                if (++idx[k] < dims_[k]) break;
                idx[k] = 0;
            }
        }
        std::vector<double> out(out_size);
        for (std::size_t i = 0; i < out_size; ++i) out[i] = acc[i].value();
        DiscretePmf m;
        m.dims_ = std::move(out_dims);
        m.probs_ = std::move(out);
        return m;
    }

private:
    void validate() const
    {
        const std::size_t expected =
            std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
        if (dims_.empty() || expected != probs_.size()) {
            throw ValidationError("pmf size " + std::to_string(probs_.size()) +
                                  " does not match alphabet product " + std::to_string(expected));
        }
        CompensatedSum s;
        for (double p : probs_) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("pmf has negative or non-finite mass");
            s.add(p);
        }
        if (std::abs(s.value() - 1.0) > 1e-12) {
            throw ValidationError("pmf not normalized: sum = " + std::to_string(s.value()));
        }
    }

    std::vector<std::size_t> dims_;
    std::vector<double> probs_;
};

inline double entropy(const DiscretePmf& p)
{
    CompensatedSum h;
    for (double x : p.probs()) {
        if (x > 0.0) h.add(-x * std::log(x));
    }
    return h.value();
}

/// Plug-in I(A;B) in nats between two disjoint groups of axes.
inline double mutual_information(const DiscretePmf& p, std::span<const std::size_t> axes_a,
                                 std::span<const std::size_t> axes_b)
{
    std::vector<std::size_t> both(axes_a.begin(), axes_a.end());
    both.insert(both.end(), axes_b.begin(), axes_b.end());
    const DiscretePmf joint = p.marginal(both);

    std::size_t na = 1;
    for (std::size_t a : axes_a) na *= p.dims()[a];
    const std::size_t nb = joint.size() / na;
    const auto pj = joint.probs();

    std::vector<double> pa(na, 0.0), pb(nb, 0.0);
    {
        std::vector<CompensatedSum> sa(na), sb(nb);
        for (std::size_t i = 0; i < na; ++i)
            for (std::size_t j = 0; j < nb; ++j) {
                sa[i].add(pj[i * nb + j]);
                sb[j].add(pj[i * nb + j]);
            }
        for (std::size_t i = 0; i < na; ++i) pa[i] = sa[i].value();
        for (std::size_t j = 0; j < nb; ++j) pb[j] = sb[j].value();
    }

    CompensatedSum mi;
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
            const double pij = pj[i * nb + j];
            if (pij > 0.0) mi.add(pij * std::log(pij / (pa[i] * pb[j])));
        }
    return std::max(0.0, mi.value());
}

/// I(X;Y) for a two-axis pmf over (X, Y).
inline double mutual_information_discrete(const DiscretePmf& pxy)
{
    if (pxy.rank() != 2) throw ValidationError("mutual_information_discrete expects a pmf over (X, Y)");
    const std::size_t a[] = {0}, b[] = {1};
    return mutual_information(pxy, a, b);
}

/// Two-source PID atoms in nats.
struct PidAtoms {
    double red = 0.0;
    double unq1 = 0.0;
    double unq2 = 0.0;
    double syn = 0.0;

    double total() const noexcept { return red + unq1 + unq2 + syn; }
};

/// PID of I(Y; {X1, X2}) with minimum-mutual-information redundancy.
/// `p` is a pmf over (X1, X2, Y).
inline PidAtoms pid_mmi(const DiscretePmf& p)
{
    if (p.rank() != 3) throw ValidationError("pid_mmi expects a pmf over (X1, X2, Y)");
    const std::size_t x1[] = {0}, x2[] = {1}, x12[] = {0, 1}, y[] = {2};
    const double i1 = mutual_information(p, y, x1);
    const double i2 = mutual_information(p, y, x2);
    const double i12 = mutual_information(p, y, x12);
    PidAtoms out;
    out.red = std::min(i1, i2);
    out.unq1 = i1 - out.red;
    out.unq2 = i2 - out.red;
    out.syn = i12 - out.red - out.unq1 - out.unq2;
    return out;
}

/// Pmf over (X1_t, X2_t, X1_{t+1}, X2_{t+1}); the two time slices share alphabets.
class JointDistribution {
public:
    JointDistribution(std::size_t n1, std::size_t n2, std::vector<double> probs)
        : pmf_({n1, n2, n1, n2}, std::move(probs))
    {
    }

    explicit JointDistribution(DiscretePmf pmf) : pmf_(std::move(pmf))
    {
        const auto d = pmf_.dims();
        if (d.size() != 4 || d[0] != d[2] || d[1] != d[3]) {
            throw ValidationError("joint distribution must have dims (n1, n2, n1, n2)");
        }
    }

    const DiscretePmf& pmf() const noexcept { return pmf_; }
    std::size_t alphabet1() const noexcept { return pmf_.dims()[0]; }
    std::size_t alphabet2() const noexcept { return pmf_.dims()[1]; }

private:
    DiscretePmf pmf_;
};

} // namespace phid
