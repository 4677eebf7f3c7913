#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "phid/discrete.hpp"
#include "phid/gaussian.hpp"
#include "phid/lattice.hpp"
#include "phid/numeric.hpp"

namespace phid {

/// The nine time-delayed MIs I(X^A_t; X^B_{t+1}) for A, B ∈ {1, 2, 12}, in nats.
struct BaseMi {
    std::array<std::array<double, 3>, 3> value{};

    double operator()(Part src, Part tgt) const noexcept { return value[index(src)][index(tgt)]; }
    double& operator()(Part src, Part tgt) noexcept { return value[index(src)][index(tgt)]; }

    double tdmi() const noexcept { return (*this)(Part::kBoth, Part::kBoth); }
};

/// The sixteen ΦID atoms, indexed [source antichain][target antichain], in nats.
/// Atoms may be negative under MMI redundancy; they are kept as computed so
/// that they sum to the TDMI.
struct PhiAtoms {
    std::array<std::array<double, 4>, 4> atom{};
    double tdmi = 0.0;
    bool degenerate = false;

    double operator()(Antichain src, Antichain tgt) const noexcept { return atom[index(src)][index(tgt)]; }
    double& operator()(Antichain src, Antichain tgt) noexcept { return atom[index(src)][index(tgt)]; }

    double syn_syn() const noexcept { return (*this)(Antichain::kSyn, Antichain::kSyn); }
    double red_red() const noexcept { return (*this)(Antichain::kRed, Antichain::kRed); }

    double sum() const noexcept
    {
        CompensatedSum s;
        for (const auto& row : atom)
            for (double v : row) s.add(v);
        return s.value();
    }
};

/// I∩(α→β): minimum over A ∈ α, B ∈ β of I(X^A_t; X^B_{t+1}).
inline double double_redundancy(Antichain src, Antichain tgt, const BaseMi& mi)
{
    double best = std::numeric_limits<double>::infinity();
    for (Part a : members(src))
        for (Part b : members(tgt)) best = std::min(best, mi(a, b));
    return best;
}

/// I∩ evaluated on all 16 nodes of the product lattice.
inline std::array<std::array<double, 4>, 4> double_redundancy_table(const BaseMi& mi)
{
    std::array<std::array<double, 4>, 4> t{};
    for (Antichain a : kAntichains)
        for (Antichain b : kAntichains) t[index(a)][index(b)] = double_redundancy(a, b, mi);
    return t;
}

/// Möbius inversion of I∩ over the product of two diamond lattices.
inline PhiAtoms phiid_atoms(const BaseMi& mi)
{
    const auto cap = double_redundancy_table(mi);
    PhiAtoms out;
    for (Antichain a : kAntichains) {
        for (Antichain b : kAntichains) {
            CompensatedSum s;
            for (Antichain a2 : kAntichains) {
                const int mu_a = mobius(a2, a);
                if (mu_a == 0) continue;
                for (Antichain b2 : kAntichains) {
                    const int mu_b = mobius(b2, b);
                    if (mu_b == 0) continue;
                    s.add(static_cast<double>(mu_a * mu_b) * cap[index(a2)][index(b2)]);
                }
            }
            out(a, b) = s.value();
        }
    }
    out.tdmi = mi.tdmi();
    return out;
}

/// Cumulative sum of atoms over the down-set of (α, β). Inverse of phiid_atoms.
inline double cumulative_atoms(const PhiAtoms& atoms, Antichain src, Antichain tgt)
{
    CompensatedSum s;
    for (Antichain a : kAntichains) {
        if (!precedes(a, src)) continue;
        for (Antichain b : kAntichains)
            if (precedes(b, tgt)) s.add(atoms(a, b));
    }
    return s.value();
}

namespace detail {
inline constexpr std::array<Part, 3> kParts = {Part::kOne, Part::kTwo, Part::kBoth};

inline std::span<const std::size_t> source_axes(Part p)
{
    static constexpr std::size_t one[] = {0}, two[] = {1}, both[] = {0, 1};
    switch (p) {
    case Part::kOne: return one;
    case Part::kTwo: return two;
    default: return both;
    }
}

inline std::span<const std::size_t> target_axes(Part p)
{
    static constexpr std::size_t one[] = {2}, two[] = {3}, both[] = {2, 3};
    switch (p) {
    case Part::kOne: return one;
    case Part::kTwo: return two;
    default: return both;
    }
}
} // namespace detail

inline BaseMi base_mi_from_distribution(const JointDistribution& p)
{
    BaseMi mi;
    for (Part a : detail::kParts)
        for (Part b : detail::kParts)
            mi(a, b) = mutual_information(p.pmf(), detail::source_axes(a), detail::target_axes(b));
    return mi;
}

inline PhiAtoms phiid_from_distribution(const JointDistribution& p)
{
    return phiid_atoms(base_mi_from_distribution(p));
}

/// Paired observations (x¹_t, x²_t, x¹_{t+1}, x²_{t+1}), one per row.
struct GaussianPairSeries {
    Eigen::Matrix<double, Eigen::Dynamic, 4> samples;
    bool standardized = false;
    bool copula = true;

    static constexpr Eigen::Index kMinSamples = 8;

    GaussianPairSeries() = default;

    GaussianPairSeries(Eigen::Matrix<double, Eigen::Dynamic, 4> s, bool is_standardized, bool use_copula)
        : samples(std::move(s)), standardized(is_standardized), copula(use_copula)
    {
        validate();
    }

    /// Pairs x[t] with x[t+lag] for every t where both lie in the same segment.
    /// `segment_starts` lists the first step of each segment (0 implied).
    static GaussianPairSeries from_streams(std::span<const double> x1, std::span<const double> x2,
                                           std::span<const std::size_t> segment_starts = {},
                                           std::size_t lag = 1, bool is_standardized = false,
                                           bool use_copula = true)
    {
        if (x1.size() != x2.size()) throw ValidationError("pair series: stream lengths differ");
        if (lag == 0) throw ValidationError("pair series: lag must be positive");
        std::vector<std::size_t> rows;
        const std::size_t n = x1.size();
        std::size_t seg = 0;
        for (std::size_t t = 0; t + lag < n; ++t) {
            while (seg < segment_starts.size() && segment_starts[seg] <= t) ++seg;
            const std::size_t seg_end = seg < segment_starts.size() ? segment_starts[seg] : n;
            if (t + lag < seg_end) rows.push_back(t);
        }
        Eigen::Matrix<double, Eigen::Dynamic, 4> s(static_cast<Eigen::Index>(rows.size()), 4);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t t = rows[r];
            const auto i = static_cast<Eigen::Index>(r);
            s(i, 0) = x1[t];
            s(i, 1) = x2[t];
            s(i, 2) = x1[t + lag];
            s(i, 3) = x2[t + lag];
        }
        return GaussianPairSeries(std::move(s), is_standardized, use_copula);
    }

    Eigen::Index count() const noexcept { return samples.rows(); }

private:
    void validate() const
    {
        if (samples.rows() < kMinSamples) {
            throw ValidationError("pair series needs at least " + std::to_string(kMinSamples) +
                                  " paired samples, got " + std::to_string(samples.rows()));
        }
        if (!samples.allFinite()) throw ValidationError("pair series contains non-finite values");
    }
};

enum class Estimator : std::uint8_t {
    kGaussian, ///< Gaussian MI from the 4x4 covariance (copula per series flag).
    kDiscrete, ///< Plug-in MI by counting; samples must be integer symbols.
};

struct PhiidOptions {
    Estimator estimator = Estimator::kGaussian;
    double ridge = kDefaultRidge;
};

namespace detail {

inline bool column_is_constant(const Eigen::VectorXd& c)
{
    const double lo = c.minCoeff(), hi = c.maxCoeff();
    return hi - lo <= 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
}

inline BaseMi base_mi_gaussian(const Eigen::MatrixXd& x, double ridge)
{
    const Eigen::MatrixXd cov = sample_covariance(x, ridge);
    static constexpr int s1[] = {0}, s2[] = {1}, s12[] = {0, 1};
    static constexpr int t1[] = {2}, t2[] = {3}, t12[] = {2, 3};
    const std::span<const int> src[] = {s1, s2, s12};
    const std::span<const int> tgt[] = {t1, t2, t12};
    BaseMi mi;
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) mi.value[a][b] = gaussian_mi_from_covariance(cov, src[a], tgt[b]);
    return mi;
}

/// Plug-in entropy of the symbol tuples formed by `cols`, by counting rows.
inline double counted_entropy(const Eigen::MatrixXd& x, std::span<const int> cols)
{
    std::map<std::vector<std::int64_t>, std::size_t> counts;
    std::vector<std::int64_t> key(cols.size());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < cols.size(); ++k) key[k] = static_cast<std::int64_t>(x(r, cols[k]));
        ++counts[key];
    }
    const double n = static_cast<double>(x.rows());
    CompensatedSum h;
    for (const auto& [k, c] : counts) {
        const double p = static_cast<double>(c) / n;
        h.add(-p * std::log(p));
    }
    return h.value();
}

inline BaseMi base_mi_discrete(const Eigen::MatrixXd& x)
{
    if ((x.array() != x.array().round()).any()) {
        throw ValidationError("discrete estimator requires integer-valued samples");
    }
    static constexpr int s1[] = {0}, s2[] = {1}, s12[] = {0, 1};
    static constexpr int t1[] = {2}, t2[] = {3}, t12[] = {2, 3};
    const std::span<const int> src[] = {s1, s2, s12};
    const std::span<const int> tgt[] = {t1, t2, t12};
    BaseMi mi;
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            std::vector<int> both(src[a].begin(), src[a].end());
            both.insert(both.end(), tgt[b].begin(), tgt[b].end());
            const double v = counted_entropy(x, src[a]) + counted_entropy(x, tgt[b]) - counted_entropy(x, both);
            mi.value[a][b] = std::max(0.0, v);
        }
    return mi;
}

} // namespace detail

/// ΦID of a paired series. With the Gaussian estimator the columns are
/// optionally copula-normalized, then z-scored unless already standardized.
/// A constant column yields all-zero atoms with `degenerate` set.
inline PhiAtoms phiid_from_series(const GaussianPairSeries& s, const PhiidOptions& opt = {})
{
    Eigen::MatrixXd x = s.samples;
    for (Eigen::Index c = 0; c < 4; ++c) {
        if (detail::column_is_constant(x.col(c))) {
            PhiAtoms degenerate;
            degenerate.degenerate = true;
            return degenerate;
        }
    }
    if (opt.estimator == Estimator::kDiscrete) return phiid_atoms(detail::base_mi_discrete(x));

    if (s.copula) {
        for (Eigen::Index c = 0; c < 4; ++c) {
            const Eigen::VectorXd col = x.col(c);
            const auto z = copula_normalize(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
            x.col(c) = Eigen::Map<const Eigen::VectorXd>(z.data(), col.size());
        }
    }
    if (s.copula || !s.standardized) {
        const Eigen::RowVectorXd mean = x.colwise().mean();
        x.rowwise() -= mean;
        const Eigen::RowVectorXd sd = (x.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
        x = x.array().rowwise() / sd.array();
    }
    return phiid_atoms(detail::base_mi_gaussian(x, opt.ridge));
}

} // namespace phid
