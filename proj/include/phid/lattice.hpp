#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace phid {

/// Source/target grouping of a two-variable system.
enum class Part : std::uint8_t { kOne = 0, kTwo = 1, kBoth = 2 };

/// Nodes of the two-source redundancy lattice:
/// kRed = {{1},{2}}, kUnq1 = {{1}}, kUnq2 = {{2}}, kSyn = {{1,2}}.
enum class Antichain : std::uint8_t { kRed = 0, kUnq1 = 1, kUnq2 = 2, kSyn = 3 };

inline constexpr std::array<Antichain, 4> kAntichains = {
    Antichain::kRed, Antichain::kUnq1, Antichain::kUnq2, Antichain::kSyn};

constexpr std::size_t index(Antichain a) noexcept { return static_cast<std::size_t>(a); }
constexpr std::size_t index(Part p) noexcept { return static_cast<std::size_t>(p); }

constexpr std::string_view name(Antichain a) noexcept
{
    switch (a) {
    case Antichain::kRed: return "red";
    case Antichain::kUnq1: return "unq1";
    case Antichain::kUnq2: return "unq2";
    case Antichain::kSyn: return "syn";
    }
    return "?";
}

namespace detail {
inline constexpr std::array<Part, 2> kRedMembers = {Part::kOne, Part::kTwo};
inline constexpr std::array<Part, 1> kUnq1Members = {Part::kOne};
inline constexpr std::array<Part, 1> kUnq2Members = {Part::kTwo};
inline constexpr std::array<Part, 1> kSynMembers = {Part::kBoth};
} // namespace detail

/// Elements of the antichain, as parts of the system.
constexpr std::span<const Part> members(Antichain a) noexcept
{
    switch (a) {
    case Antichain::kRed: return detail::kRedMembers;
    case Antichain::kUnq1: return detail::kUnq1Members;
    case Antichain::kUnq2: return detail::kUnq2Members;
    case Antichain::kSyn: return detail::kSynMembers;
    }
    return {};
}

/// Lattice order: red below both uniques, both uniques below syn.
constexpr bool precedes(Antichain lo, Antichain hi) noexcept
{
    if (lo == hi || lo == Antichain::kRed || hi == Antichain::kSyn) return true;
    return false;
}

/// Möbius function of the diamond lattice, mu(lo, hi). Zero unless lo ⪯ hi.
constexpr int mobius(Antichain lo, Antichain hi) noexcept
{
    if (!precedes(lo, hi)) return 0;
    if (lo == hi) return 1;
    if (lo == Antichain::kRed && hi == Antichain::kSyn) return 1;
    return -1;
}

/// Swap the roles of variables 1 and 2.
constexpr Antichain mirror(Antichain a) noexcept
{
    switch (a) {
    case Antichain::kUnq1: return Antichain::kUnq2;
    case Antichain::kUnq2: return Antichain::kUnq1;
    default: return a;
    }
}

} // namespace phid
