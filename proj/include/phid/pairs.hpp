#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <thread>
#include <utility>
#include <vector>

#include "phid/phiid.hpp"
#include "phid/traces.hpp"

namespace phid {

/// Which head pairs enter the pairwise decomposition.
struct PairStrategy {
    enum class Kind { kAll, kSampled };

    Kind kind = Kind::kAll;
    std::size_t partners = 64; ///< per head, for kSampled
    std::uint64_t seed = 0;

    static constexpr std::size_t kAllPairsLimit = 512;

    static PairStrategy all() { return {}; }
    static PairStrategy sampled(std::size_t k, std::uint64_t seed) { return {Kind::kSampled, k, seed}; }

    /// All pairs up to 512 heads, otherwise 64 sampled partners per head.
    static PairStrategy automatic(std::size_t heads, std::uint64_t seed)
    {
        return heads <= kAllPairsLimit ? all() : sampled(64, seed);
    }
};

enum class Pooling {
    kPooled,     ///< one decomposition over all within-segment transitions
    kPerSegment, ///< decompose each segment, then average atoms
};

struct DecomposeOptions {
    PhiidOptions phiid;
    bool copula = true;
    std::size_t lag = 1;
    Pooling pooling = Pooling::kPooled;
    unsigned threads = 1;
};

struct PairAtoms {
    std::size_t i = 0;
    std::size_t j = 0;
    PhiAtoms atoms;
};

struct PairAtomsTable {
    std::size_t heads = 0;
    std::vector<PairAtoms> pairs; ///< sorted by (i, j), i < j

    std::size_t degenerate_count() const
    {
        return static_cast<std::size_t>(
            std::count_if(pairs.begin(), pairs.end(), [](const PairAtoms& p) { return p.atoms.degenerate; }));
    }
};

/// Unordered pairs (i < j), sorted. Sampling draws `partners` distinct
/// partners for each head from a seeded generator and takes the union.
inline std::vector<std::pair<std::size_t, std::size_t>> select_pairs(std::size_t heads, const PairStrategy& s)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (s.kind == PairStrategy::Kind::kAll || s.partners + 1 >= heads) {
        for (std::size_t i = 0; i < heads; ++i)
            for (std::size_t j = i + 1; j < heads; ++j) out.emplace_back(i, j);
        return out;
    }
    std::mt19937_64 rng(s.seed);
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    std::vector<std::size_t> others(heads - 1);
    for (std::size_t i = 0; i < heads; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < heads; ++j)
            if (j != i) others[w++] = j;
        // partial Fisher-Yates
        for (std::size_t k = 0; k < s.partners; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
            std::swap(others[k], others[pick(rng)]);
            chosen.emplace(std::min(i, others[k]), std::max(i, others[k]));
        }
    }
    return {chosen.begin(), chosen.end()};
}

namespace detail {

inline PhiAtoms decompose_pair(const std::vector<double>& x1, const std::vector<double>& x2,
                               const std::vector<std::size_t>& starts, const DecomposeOptions& opt)
{
    if (opt.pooling == Pooling::kPooled) {
        return phiid_from_series(GaussianPairSeries::from_streams(x1, x2, starts, opt.lag, true, opt.copula), opt.phiid);
    }
    std::vector<std::size_t> bounds = starts;
    if (bounds.empty() || bounds.front() != 0) bounds.insert(bounds.begin(), 0);
    bounds.push_back(x1.size());
    std::array<std::array<CompensatedSum, 4>, 4> acc{};
    CompensatedSum tdmi;
    std::size_t used = 0;
    bool degenerate = false;
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        const std::size_t b = bounds[s], e = bounds[s + 1];
        if (e - b < GaussianPairSeries::kMinSamples + opt.lag) continue;
        const std::span<const double> s1(x1.data() + b, e - b), s2(x2.data() + b, e - b);
        const PhiAtoms a =
            phiid_from_series(GaussianPairSeries::from_streams(s1, s2, {}, opt.lag, false, opt.copula), opt.phiid);
        degenerate = degenerate || a.degenerate;
        for (std::size_t u = 0; u < 4; ++u)
            for (std::size_t v = 0; v < 4; ++v) acc[u][v].add(a.atom[u][v]);
        tdmi.add(a.tdmi);
        ++used;
    }
    if (used == 0) throw ValidationError("no segment is long enough for per-segment decomposition");
    PhiAtoms out;
    for (std::size_t u = 0; u < 4; ++u)
        for (std::size_t v = 0; v < 4; ++v) out.atom[u][v] = acc[u][v].value() / static_cast<double>(used);
    out.tdmi = tdmi.value() / static_cast<double>(used);
    out.degenerate = degenerate;
    return out;
}

} // namespace detail

/// ΦID for every selected head pair of a standardized trace.
inline PairAtomsTable pairwise_atoms(const TraceTensor& trace, const PairStrategy& strategy,
                                     const DecomposeOptions& opt = {})
{
    trace.validate();
    if (trace.steps < TraceTensor::kMinAnalysisSteps) {
        throw ValidationError("trace too short for analysis: " + std::to_string(trace.steps) + " steps, need " +
                              std::to_string(TraceTensor::kMinAnalysisSteps));
    }
    if (trace.heads() < 2) throw ValidationError("need at least 2 heads");

    std::vector<std::vector<double>> series(trace.heads());
    for (std::size_t i = 0; i < trace.heads(); ++i) series[i] = trace.head_series(i);

    const auto selected = select_pairs(trace.heads(), strategy);
    PairAtomsTable table;
    table.heads = trace.heads();
    table.pairs.resize(selected.size());

    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t p = begin; p < selected.size(); p += stride) {
            const auto [i, j] = selected[p];
            table.pairs[p] = {i, j, detail::decompose_pair(series[i], series[j], trace.segment_starts, opt)};
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(selected.size())));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    try {
                        work(w, workers);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return table;
}

} // namespace phid
