#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "phid/error.hpp"

namespace phid {

inline constexpr double kDefaultRidge = 1e-8;

/// log det of a symmetric positive definite matrix. Throws NumericalError
/// when the Cholesky factorization fails.
inline double log_det_spd(const Eigen::MatrixXd& m)
{
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << "covariance not positive definite (" << m.rows() << "x" << m.cols()
           << ", min diag " << m.diagonal().minCoeff() << ")";
        throw NumericalError(os.str());
    }
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Eigen::MatrixXd sub_block(const Eigen::MatrixXd& m, std::span<const int> idx)
{
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(idx[i], idx[j]);
    return out;
}

/// Gaussian I(A;B) = ½ ln(det Σ_A det Σ_B / det Σ_AB) from a covariance
/// matrix (ridge already applied). Negative round-off is clamped to 0.
inline double gaussian_mi_from_covariance(const Eigen::MatrixXd& cov, std::span<const int> a,
                                          std::span<const int> b)
{
    std::vector<int> ab(a.begin(), a.end());
    ab.insert(ab.end(), b.begin(), b.end());
    const double mi =
        0.5 * (log_det_spd(sub_block(cov, a)) + log_det_spd(sub_block(cov, b)) - log_det_spd(sub_block(cov, ab)));
    return std::max(0.0, mi);
}

/// Unbiased sample covariance of the rows of `x` plus `ridge` on the diagonal.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x, double ridge)
{
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.adjoint() * centered) / static_cast<double>(x.rows() - 1);
    cov.diagonal().array() += ridge;
    return cov;
}

/// Gaussian MI between the first `p` columns and the next `q` columns of
/// `samples` (one observation per row).
inline double mutual_information_gaussian(const Eigen::MatrixXd& samples, int p, int q,
                                          double ridge = kDefaultRidge)
{
    if (p < 1 || q < 1 || samples.cols() != p + q) {
        throw ValidationError("mutual_information_gaussian: column split does not match sample width");
    }
    if (samples.rows() <= std::max(p, q) + 2) {
        throw ValidationError("mutual_information_gaussian: need more than max(p,q)+2 samples");
    }
    if (!samples.allFinite()) throw ValidationError("mutual_information_gaussian: non-finite sample");
    const Eigen::MatrixXd cov = sample_covariance(samples, ridge);
    std::vector<int> a(p), b(q);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), p);
    return gaussian_mi_from_covariance(cov, a, b);
}

inline double mutual_information_gaussian(std::span<const double> x, std::span<const double> y,
                                          double ridge = kDefaultRidge)
{
    if (x.size() != y.size()) throw ValidationError("mutual_information_gaussian: length mismatch");
    Eigen::MatrixXd s(static_cast<Eigen::Index>(x.size()), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        s(static_cast<Eigen::Index>(i), 0) = x[i];
        s(static_cast<Eigen::Index>(i), 1) = y[i];
    }
    return mutual_information_gaussian(s, 1, 1, ridge);
}

/// Standard normal quantile.
inline double normal_quantile(double u)
{
    return std::numbers::sqrt2 * boost::math::erf_inv(2.0 * u - 1.0);
}

/// Rank-transform to normal scores Φ⁻¹(r / (n + 1)); ties get their average rank.
inline std::vector<double> copula_normalize(std::span<const double> x)
{
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> out(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        const double z = normal_quantile(rank / static_cast<double>(n + 1));
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = z;
        i = j + 1;
    }
    return out;
}

} // namespace phid
