#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "phid/toy/config.hpp"

namespace phid::toy {

/// Fixed-length token sequences with one target per sequence.
struct Dataset {
    std::size_t seq_len = 0;
    std::vector<int> tokens; ///< [size x seq_len] row-major
    std::vector<int> targets;

    std::size_t size() const noexcept { return targets.size(); }

    std::span<const int> row(std::size_t i) const { return {tokens.data() + i * seq_len, seq_len}; }

    /// Sequences [begin, end) as a contiguous token block.
    std::span<const int> rows(std::size_t begin, std::size_t end) const
    {
        return {tokens.data() + begin * seq_len, (end - begin) * seq_len};
    }

    void push(std::span<const int> seq, int target)
    {
        tokens.insert(tokens.end(), seq.begin(), seq.end());
        targets.push_back(target);
    }

    Dataset subset(std::span<const std::size_t> ids) const
    {
        Dataset out;
        out.seq_len = seq_len;
        for (std::size_t i : ids) out.push(row(i), targets[i]);
        return out;
    }

    Dataset head(std::size_t n) const
    {
        std::vector<std::size_t> ids(std::min(n, size()));
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        return subset(ids);
    }
};

struct TaskSplit {
    Dataset train;
    Dataset holdout;
};

/// Every problem of the task (modular addition enumerates all p² pairs;
/// chain and copy draw `samples` sequences), shuffled and split by seed.
inline TaskSplit make_task(const TaskSpec& t, std::uint64_t seed)
{
    std::mt19937_64 rng(seed ^ 0x7461736bULL);
    Dataset all;
    all.seq_len = t.seq_len();
    const int p = static_cast<int>(t.p), eq = t.equals_token();
    std::vector<int> seq(all.seq_len);
    switch (t.kind) {
    case TaskSpec::Kind::kModularAddition:
        for (int a = 0; a < p; ++a)
            for (int b = 0; b < p; ++b) {
                seq = {a, b, eq};
                all.push(seq, (a + b) % p);
            }
        break;
    case TaskSpec::Kind::kChain: {
        std::uniform_int_distribution<int> x(0, p - 1);
        for (std::size_t n = 0; n < t.samples; ++n) {
            int sum = 0;
            for (std::size_t k = 0; k <= t.chain_steps; ++k) {
                seq[k] = x(rng);
                sum = (sum + seq[k]) % p;
            }
            seq.back() = eq;
            all.push(seq, sum);
        }
        break;
    }
    case TaskSpec::Kind::kCopy: {
        std::uniform_int_distribution<int> x(0, p - 1);
        for (std::size_t n = 0; n < t.samples; ++n) {
            for (std::size_t k = 0; k < t.copy_length; ++k) seq[k] = x(rng);
            seq.back() = eq;
            all.push(seq, seq[t.copy_length - 1]);
        }
        break;
    }
    }
    std::vector<std::size_t> ids(all.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(t.train_fraction * static_cast<double>(ids.size()))), 1, ids.size() - 1);
    TaskSplit s;
    s.train = all.subset(std::span(ids).first(n_train));
    s.holdout = all.subset(std::span(ids).subspan(n_train));
    return s;
}

} // namespace phid::toy
