#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace phid {

inline constexpr double kLn2 = std::numbers::ln2;

/// Neumaier-compensated accumulator. Order-independent to ~1e-15 relative
/// for the sums we reduce here, which keeps threaded reductions reproducible.
class CompensatedSum {
public:
    void add(double x) noexcept
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    CompensatedSum& operator+=(double x) noexcept
    {
        add(x);
        return *this;
    }

    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept
{
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

enum class Units { kNats, kBits };

inline double to_units(double nats, Units u) noexcept
{
    return u == Units::kBits ? nats / kLn2 : nats;
}

inline const char* units_name(Units u) noexcept
{
    return u == Units::kBits ? "bits" : "nats";
}

} // namespace phid
