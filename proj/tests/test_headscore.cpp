#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "phid/headscore.hpp"

namespace phid {
namespace {

TraceTensor make_trace(std::size_t layers, std::size_t h, const std::vector<std::vector<double>>& series)
{
    TraceTensor t;
    t.layers = layers;
    t.heads_per_layer = h;
    t.steps = series.front().size();
    t.layer_of_head = TraceTensor::default_layer_of_head(layers, h);
    t.values.resize(t.steps * t.heads());
    for (std::size_t i = 0; i < t.heads(); ++i)
        for (std::size_t s = 0; s < t.steps; ++s) t(s, i) = series[i][s];
    return t;
}

PairAtoms injected(std::size_t i, std::size_t j, double syn, double red)
{
    PairAtoms p{i, j, {}};
    p.atoms(Antichain::kSyn, Antichain::kSyn) = syn;
    p.atoms(Antichain::kRed, Antichain::kRed) = red;
    return p;
}

// --- pair selection ----------------------------------------------------------

TEST(SelectPairs, AllPairsCount)
{
    for (std::size_t n : {2u, 5u, 24u}) EXPECT_EQ(select_pairs(n, PairStrategy::all()).size(), n * (n - 1) / 2);
}

TEST(SelectPairs, SampledCoversEveryHeadAndIsSeeded)
{
    const std::size_t n = 40, k = 5;
    const auto a = select_pairs(n, PairStrategy::sampled(k, 1));
    std::vector<std::size_t> degree(n, 0);
    for (auto [i, j] : a) {
        ASSERT_LT(i, j);
        ++degree[i];
        ++degree[j];
    }
    for (std::size_t d : degree) EXPECT_GE(d, k);
    EXPECT_LT(a.size(), n * (n - 1) / 2);
    EXPECT_EQ(a, select_pairs(n, PairStrategy::sampled(k, 1)));
    EXPECT_NE(a, select_pairs(n, PairStrategy::sampled(k, 2)));
}

TEST(SelectPairs, AutomaticSwitchesAboveLimit)
{
    EXPECT_EQ(PairStrategy::automatic(512, 0).kind, PairStrategy::Kind::kAll);
    const auto big = PairStrategy::automatic(513, 0);
    EXPECT_EQ(big.kind, PairStrategy::Kind::kSampled);
    EXPECT_EQ(big.partners, 64u);
}

// --- score_heads -------------------------------------------------------------

TEST(ScoreHeads, InjectedAtomsGiveDiff)
{
    PairAtomsTable t;
    t.heads = 2;
    t.pairs = {injected(0, 1, 0.3, 0.1)};
    const auto s = score_heads(t, {0, 1}, 1);
    for (const auto& r : s.rows) {
        EXPECT_NEAR(r.diff, 0.2, 1e-15);
        EXPECT_EQ(r.diff, r.abstract - r.memory);
        EXPECT_EQ(r.pair_count, 1u);
    }
}

TEST(ScoreHeads, IdenticalAr1HeadsAreMemory)
{
    std::mt19937_64 rng(21);
    const auto x = oracle::ar1(5000, 0.8, rng);
    const auto s = score_heads(make_trace(2, 1, {x, x}), PairStrategy::all());
    for (const auto& r : s.rows) EXPECT_GT(r.memory, r.abstract);
}

TEST(ScoreHeads, XorCoupledHeadCarriesSynergy)
{
    // A is fresh noise each step and C = A xor s, where s is a hidden bit that
    // flips with probability 0.1. Neither head alone says anything about s;
    // together they reveal it, and s predicts its own next value. B copies A.
    std::mt19937_64 rng(22);
    std::bernoulli_distribution bit(0.5), flip(0.1);
    const std::size_t n = 20000;
    std::vector<double> a(n), c(n);
    int hidden = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (flip(rng)) hidden ^= 1;
        const int x = bit(rng);
        a[t] = x;
        c[t] = x ^ hidden;
    }
    const TraceTensor trace = make_trace(3, 1, {a, a, c});
    DecomposeOptions opt;
    opt.phiid.estimator = Estimator::kDiscrete;
    const PairAtomsTable table = pairwise_atoms(trace, PairStrategy::all(), opt);

    // same atoms through the distribution route on the empirical pmf
    for (const auto& p : table.pairs) {
        std::vector<double> counts(16, 0.0);
        const auto x = trace.head_series(p.i), y = trace.head_series(p.j);
        for (std::size_t t = 0; t + 1 < n; ++t) {
            const auto idx = ((static_cast<std::size_t>(x[t]) * 2 + static_cast<std::size_t>(y[t])) * 2 +
                              static_cast<std::size_t>(x[t + 1])) * 2 + static_cast<std::size_t>(y[t + 1]);
            counts[idx] += 1.0;
        }
        const PhiAtoms ref = phiid_from_distribution(JointDistribution(DiscretePmf::from_counts({2, 2, 2, 2}, counts)));
        for (auto u : kAntichains)
            for (auto v : kAntichains) EXPECT_NEAR(p.atoms(u, v), ref(u, v), 1e-12);
    }

    const double hb = -(0.1 * std::log(0.1) + 0.9 * std::log(0.9));
    const double want = std::numbers::ln2 - hb;
    const double baseline = table.pairs[0].atoms.syn_syn(); // (A, B), identical
    EXPECT_NEAR(baseline, 0.0, 0.01);
    EXPECT_NEAR(table.pairs[1].atoms.syn_syn(), want, 0.01);
    EXPECT_NEAR(table.pairs[2].atoms.syn_syn(), want, 0.01);

    const auto s = score_heads(trace, PairStrategy::all(), opt);
    EXPECT_EQ(s.by_rank().front(), 2u);
    EXPECT_GT(s.rows[2].abstract, baseline + 0.3);
}

TEST(ScoreHeads, RankIsPermutation)
{
    PairAtomsTable t;
    t.heads = 4;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1, 1);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) t.pairs.push_back(injected(i, j, u(rng), u(rng)));
    const auto s = score_heads(t, {0, 0, 1, 1}, 2);
    std::vector<std::size_t> ranks;
    for (const auto& r : s.rows) ranks.push_back(r.rank);
    std::sort(ranks.begin(), ranks.end());
    EXPECT_EQ(ranks, (std::vector<std::size_t>{1, 2, 3, 4}));
    for (std::size_t k = 1; k < 4; ++k) EXPECT_GE(s.rows[s.by_rank()[k - 1]].diff, s.rows[s.by_rank()[k]].diff);
}

TEST(ScoreHeads, PermutationEquivariance)
{
    std::mt19937_64 rng(24);
    std::vector<std::vector<double>> series;
    const auto base = oracle::ar1(800, 0.7, rng);
    std::normal_distribution<double> noise;
    for (int h = 0; h < 6; ++h) {
        std::vector<double> s = base;
        for (double& v : s) v = v * (h % 3) * 0.5 + noise(rng);
        series.push_back(s);
    }
    const TraceTensor t = make_trace(3, 2, series);
    const std::vector<std::size_t> perm = {4, 0, 5, 2, 1, 3}; // new head k is old perm[k]
    std::vector<std::vector<double>> permuted;
    for (std::size_t k : perm) permuted.push_back(series[k]);
    TraceTensor tp = make_trace(3, 2, permuted);
    for (std::size_t k = 0; k < 6; ++k) tp.layer_of_head[k] = t.layer_of_head[perm[k]];

    const auto s = score_heads(t, PairStrategy::all()), sp = score_heads(tp, PairStrategy::all());
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_NEAR(sp.rows[k].abstract, s.rows[perm[k]].abstract, 1e-12);
        EXPECT_NEAR(sp.rows[k].memory, s.rows[perm[k]].memory, 1e-12);
        EXPECT_EQ(sp.rows[k].layer, s.rows[perm[k]].layer);
    }
}

TEST(ScoreHeads, RankingInvariantToCommonShift)
{
    PairAtomsTable t;
    t.heads = 6;
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> u(-1, 1);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j) t.pairs.push_back(injected(i, j, u(rng), u(rng)));
    const std::vector<int> layers = {0, 0, 1, 1, 2, 2};
    const auto before = score_heads(t, layers, 2).by_rank();
    for (auto& p : t.pairs)
        for (auto a : kAntichains)
            for (auto b : kAntichains) p.atoms(a, b) += 0.37;
    EXPECT_EQ(score_heads(t, layers, 2).by_rank(), before);
}

TEST(ScoreHeads, AllPairsIgnoresSeedAndThreadsAreDeterministic)
{
    std::mt19937_64 rng(26);
    std::vector<std::vector<double>> series;
    for (int h = 0; h < 8; ++h) series.push_back(oracle::ar1(400, 0.5, rng));
    const TraceTensor t = make_trace(4, 2, series);
    PairStrategy s1 = PairStrategy::all(), s2 = PairStrategy::all();
    s2.seed = 99;
    DecomposeOptions threaded;
    threaded.threads = 3;
    const auto a = pairwise_atoms(standardize(t).trace, s1);
    const auto b = pairwise_atoms(standardize(t).trace, s2, threaded);
    ASSERT_EQ(a.pairs.size(), b.pairs.size());
    for (std::size_t p = 0; p < a.pairs.size(); ++p)
        for (auto u : kAntichains)
            for (auto v : kAntichains) EXPECT_EQ(a.pairs[p].atoms(u, v), b.pairs[p].atoms(u, v));
}

TEST(ScoreHeads, SampledIsDeterministicGivenSeed)
{
    std::mt19937_64 rng(27);
    std::vector<std::vector<double>> series;
    for (int h = 0; h < 12; ++h) series.push_back(oracle::ar1(300, 0.5, rng));
    const TraceTensor t = make_trace(6, 2, series);
    const auto a = score_heads(t, PairStrategy::sampled(3, 5)), b = score_heads(t, PairStrategy::sampled(3, 5));
    for (std::size_t h = 0; h < 12; ++h) EXPECT_EQ(a.rows[h].diff, b.rows[h].diff);
}

TEST(ScoreHeads, Errors)
{
    std::mt19937_64 rng(28);
    EXPECT_THROW(score_heads(make_trace(2, 1, {oracle::ar1(10, 0.5, rng), oracle::ar1(10, 0.5, rng)}),
                             PairStrategy::all()),
                 ValidationError);
    EXPECT_THROW(score_heads(make_trace(1, 1, {oracle::ar1(100, 0.5, rng)}), PairStrategy::all()), ValidationError);
}

TEST(ScoreHeads, PerSegmentPoolingAverages)
{
    std::mt19937_64 rng(29);
    const auto x = oracle::ar1(2000, 0.8, rng);
    TraceTensor t = make_trace(2, 1, {x, x});
    t.segment_starts = {0, 1000};
    DecomposeOptions opt;
    opt.pooling = Pooling::kPerSegment;
    const auto per = pairwise_atoms(t, PairStrategy::all(), opt);
    // the mean of the two halves decomposed separately
    PhiAtoms halves[2];
    for (int s = 0; s < 2; ++s) {
        std::vector<double> h(x.begin() + s * 1000, x.begin() + (s + 1) * 1000);
        halves[s] = phiid_from_series(GaussianPairSeries::from_streams(h, h, {}, 1, false, true));
    }
    EXPECT_NEAR(per.pairs[0].atoms.red_red(), 0.5 * (halves[0].red_red() + halves[1].red_red()), 1e-12);
}

// --- layer profile -------------------------------------------------------------

TEST(LayerProfile, RiseThenFallIsConcave)
{
    const auto p = fit_layer_profile({-0.2, 0.1, 0.3, 0.25, 0.0, -0.3});
    EXPECT_EQ(p.curvature_sign, -1);
    EXPECT_LT(p.coeffs[2], 0.0);
}

TEST(LayerProfile, ConstantIsFlat)
{
    const auto p = fit_layer_profile(std::vector<double>(8, 0.4));
    EXPECT_EQ(p.curvature_sign, 0);
    EXPECT_NEAR(p.coeffs[2], 0.0, 1e-9);
    EXPECT_NEAR(p.fitted(3.0), 0.4, 1e-12);
}

TEST(LayerProfile, InvertedUPeaksInMiddleThird)
{
    std::mt19937_64 rng(30);
    std::normal_distribution<double> noise(0.0, 0.02);
    std::uniform_real_distribution<double> centre(0.4, 0.6);
    for (std::size_t layers : {6u, 12u, 24u, 36u}) {
        const double mid = centre(rng) * static_cast<double>(layers - 1);
        std::vector<double> d(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            const double u = (static_cast<double>(l) - mid) / static_cast<double>(layers);
            d[l] = 0.3 - 4.0 * u * u + noise(rng);
        }
        const auto p = fit_layer_profile(d);
        EXPECT_EQ(p.curvature_sign, -1);
        EXPECT_GE(p.peak_layer, static_cast<double>(layers) / 3.0 - 0.5);
        EXPECT_LE(p.peak_layer, 2.0 * static_cast<double>(layers) / 3.0 - 0.5);
    }
}

TEST(LayerProfile, FromScoresAndTooFewLayers)
{
    PairAtomsTable t;
    t.heads = 3;
    t.pairs = {injected(0, 1, 0.1, 0.0), injected(0, 2, 0.0, 0.0), injected(1, 2, 0.3, 0.0)};
    const auto s = score_heads(t, {0, 1, 2}, 1);
    const auto m = layer_mean_diff(s);
    EXPECT_NEAR(m[0], 0.05, 1e-15);
    EXPECT_NEAR(m[1], 0.2, 1e-15);
    EXPECT_NEAR(m[2], 0.15, 1e-15);
    EXPECT_THROW(fit_layer_profile({0.0, 1.0}), ValidationError);
}

// --- separation ------------------------------------------------------------------

/// `bimodal`: two groups of heads, one with strong mutual synergy, the other
/// with strong mutual redundancy. Otherwise every pair draws from one band.
PairAtomsTable synthetic_table(std::size_t n, bool bimodal, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 0.05);
    std::uniform_real_distribution<double> band(0.2, 0.3);
    PairAtomsTable t;
    t.heads = n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!bimodal) {
                t.pairs.push_back(injected(i, j, band(rng), band(rng)));
                continue;
            }
            const bool gi = i < n / 2, gj = j < n / 2;
            if (gi && gj) t.pairs.push_back(injected(i, j, 0.6 + u(rng), u(rng)));
            else if (!gi && !gj) t.pairs.push_back(injected(i, j, u(rng), 0.6 + u(rng)));
            else t.pairs.push_back(injected(i, j, u(rng), u(rng)));
        }
    return t;
}

std::vector<int> layer_ids(std::size_t n, std::size_t h)
{
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = static_cast<int>(i / h);
    return l;
}

TEST(Separation, IdenticalTablesGiveZero)
{
    std::mt19937_64 rng(31);
    const auto t = synthetic_table(12, true, rng);
    const auto s = score_heads(t, layer_ids(12, 4), 4);
    const auto layout = force_layout(build_graph(t, GraphKind::kCombined), {.seed = 1}).positions;
    const auto c = separation_statistic(s, s, layout, layout);
    EXPECT_EQ(c.difference, 0.0);
    EXPECT_GE(c.easy.silhouette, -1.0);
    EXPECT_LE(c.easy.silhouette, 1.0);
}

TEST(Separation, BimodalBeatsUnimodal)
{
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 5; ++trial) {
        const auto easy = synthetic_table(16, false, rng), hard = synthetic_table(16, true, rng);
        const auto se = score_heads(easy, layer_ids(16, 4), 4), sh = score_heads(hard, layer_ids(16, 4), 4);
        const auto le = force_layout(build_graph(easy, GraphKind::kCombined), {.seed = 2}).positions;
        const auto lh = force_layout(build_graph(hard, GraphKind::kCombined), {.seed = 2}).positions;
        const auto c = separation_statistic(se, sh, le, lh, 0.25);
        EXPECT_GT(c.hard.silhouette, c.easy.silhouette);
        EXPECT_GT(c.difference, 0.0);
        EXPECT_EQ(c.hard.top.size(), 4u);
    }
}

TEST(Separation, HalfOfFourHeads)
{
    PairAtomsTable t;
    t.heads = 4;
    t.pairs = {injected(0, 1, 0.5, 0.0), injected(0, 2, 0.0, 0.0), injected(0, 3, 0.0, 0.0),
               injected(1, 2, 0.0, 0.0), injected(1, 3, 0.0, 0.0), injected(2, 3, 0.0, 0.5)};
    const auto s = score_heads(t, {0, 0, 1, 1}, 2);
    const std::vector<Point> layout = {{0, 0}, {0, 1}, {5, 0}, {5, 1}};
    const auto r = separation_report(s, layout, 0.5);
    ASSERT_EQ(r.top.size(), 2u);
    ASSERT_EQ(r.bottom.size(), 2u);
    EXPECT_TRUE(std::isfinite(r.silhouette));
    // a = 1, b = (5 + √26) / 2 for every point
    const double b = (5.0 + std::sqrt(26.0)) / 2.0;
    EXPECT_NEAR(r.silhouette, (b - 1.0) / b, 1e-12);
}

TEST(Separation, Errors)
{
    std::mt19937_64 rng(33);
    const auto s4 = score_heads(synthetic_table(4, false, rng), {0, 0, 1, 1}, 2);
    const auto s6 = score_heads(synthetic_table(6, false, rng), {0, 0, 1, 1, 2, 2}, 2);
    const std::vector<Point> l4(4), l6(6);
    EXPECT_THROW(separation_statistic(s4, s6, l4, l6), ValidationError);
    EXPECT_THROW(separation_report(s4, l4, 0.6), ValidationError);
    EXPECT_THROW(separation_report(s4, l6, 0.5), ValidationError);
}

} // namespace
} // namespace phid
