#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "phid/toymodel.hpp"

namespace phid::toy {
namespace {

ToyConfig small_config(std::size_t p = 7)
{
    ToyConfig c;
    c.layers = 2;
    c.heads = 2;
    c.d_model = 16;
    c.d_mlp = 32;
    c.task.p = p;
    c.init_std = 0.3;
    return c;
}

// --- config and tasks ----------------------------------------------------------

TEST(ToyConfig, Validation)
{
    ToyConfig c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.d_model = 15;
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_config(8);
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_config();
    c.task.train_fraction = 1.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ToyConfig, JsonRoundTrip)
{
    ToyConfig c = small_config(11);
    c.task.kind = TaskSpec::Kind::kChain;
    c.task.chain_steps = 3;
    c.lr = 3e-4;
    const nlohmann::json j = c;
    const ToyConfig back = j.get<ToyConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_EQ(back.seq_len(), 5u);
    EXPECT_THROW(nlohmann::json({{"layers", "six"}}).get<ToyConfig>(), ValidationError);
}

TEST(Tasks, ModularAdditionEnumeratesAllPairs)
{
    TaskSpec t;
    t.p = 7;
    const auto s = make_task(t, 0);
    EXPECT_EQ(s.train.size() + s.holdout.size(), 49u);
    std::vector<int> seen(49, 0);
    for (const Dataset* d : {&s.train, &s.holdout})
        for (std::size_t i = 0; i < d->size(); ++i) {
            const auto r = d->row(i);
            EXPECT_EQ(r[2], 7);
            EXPECT_EQ(d->targets[i], (r[0] + r[1]) % 7);
            ++seen[static_cast<std::size_t>(r[0] * 7 + r[1])];
        }
    for (int v : seen) EXPECT_EQ(v, 1);
    EXPECT_EQ(make_task(t, 0).train.tokens, s.train.tokens);
    EXPECT_NE(make_task(t, 1).train.tokens, s.train.tokens);
}

TEST(Tasks, ChainAndCopyTargets)
{
    TaskSpec t;
    t.kind = TaskSpec::Kind::kChain;
    t.p = 5;
    t.chain_steps = 3;
    t.samples = 200;
    const auto c = make_task(t, 2);
    for (std::size_t i = 0; i < c.train.size(); ++i) {
        const auto r = c.train.row(i);
        EXPECT_EQ(c.train.targets[i], (r[0] + r[1] + r[2] + r[3]) % 5);
    }
    t.kind = TaskSpec::Kind::kCopy;
    t.copy_length = 4;
    const auto k = make_task(t, 2);
    for (std::size_t i = 0; i < k.train.size(); ++i) EXPECT_EQ(k.train.targets[i], k.train.row(i)[3]);
}

// --- forward pass --------------------------------------------------------------

TEST(Forward, ZeroOutputProjectionsLeaveResidualUntouched)
{
    const ToyConfig c = small_config();
    ToyModel m = ToyModel::initialized(c);
    for (const auto& l : m.layout().layers) {
        view(m.params(), l.wo).setZero();
        view(m.params(), l.w2).setZero();
        view(m.params(), l.b2).setZero();
    }
    const auto data = make_task(c.task, 0).train.head(5);
    const auto f = m.forward(data.tokens, 5);
    EXPECT_EQ(f.h.back(), f.h.front());
    // logits = Norm(h_0) W_out at the final position
    for (std::size_t b = 0; b < 5; ++b) {
        const Eigen::RowVectorXd x = f.h[0].row(static_cast<Index>(3 * b + 2));
        const double r = 1.0 / std::sqrt(x.squaredNorm() / static_cast<double>(x.size()) + c.norm_eps);
        const Eigen::RowVectorXd want = (x * r).cwiseProduct(view(m.params(), m.layout().gf).row(0)) * view(m.params(), m.layout().wout);
        EXPECT_LT((f.logits.row(static_cast<Index>(b)) - want).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Forward, ResidualAdditivityAndSoftmaxRows)
{
    const ToyConfig c = small_config();
    const ToyModel m = ToyModel::initialized(c);
    const auto data = make_task(c.task, 0).train.head(20);
    const auto cap = capture(m, data, {}, true);
    EXPECT_LE(cap.residual.max_additivity_error(), 1e-5);
    EXPECT_NO_THROW(cap.residual.validate());
    const auto f = m.forward(data.tokens, 20);
    for (const auto& l : f.layers)
        for (Index r = 0; r < l.probs.rows(); ++r) {
            EXPECT_NEAR(l.probs.row(r).sum(), 1.0, 1e-6);
            const Index t = r % 3;
            for (Index s = t + 1; s < 3; ++s) EXPECT_EQ(l.probs(r, s), 0.0);
        }
}

TEST(Forward, HeadWithZeroValueProjectionHasZeroNorm)
{
    const ToyConfig c = small_config();
    ToyModel m = ToyModel::initialized(c);
    const std::size_t dh = c.d_head();
    view(m.params(), m.layout().layers[1].wv).middleCols(static_cast<Index>(dh), static_cast<Index>(dh)).setZero();
    const auto cap = capture(m, make_task(c.task, 0).train.head(10));
    const std::size_t head = 1 * c.heads + 1;
    for (std::size_t t = 0; t < cap.heads.steps; ++t) {
        EXPECT_EQ(cap.heads(t, head), 0.0);
        EXPECT_GT(cap.heads(t, 0), 0.0);
    }
}

TEST(Forward, AblationZeroesTraceEntriesExactly)
{
    const ToyConfig c = small_config();
    const ToyModel m = ToyModel::initialized(c);
    const auto data = make_task(c.task, 0).train.head(10);
    const auto full = capture(m, data);
    const auto cut = capture(m, data, Intervention::ablate({0, 3}));
    for (std::size_t t = 0; t < cut.heads.steps; ++t) {
        EXPECT_EQ(cut.heads(t, 0), 0.0);
        EXPECT_EQ(cut.heads(t, 3), 0.0);
        // heads in layer 0 before any ablated write are unaffected
        EXPECT_EQ(cut.heads(t, 1), full.heads(t, 1));
    }
    EXPECT_EQ(cut.heads.segment_starts.size(), 10u);
    EXPECT_NO_THROW(cut.heads.validate());
}

TEST(Forward, RejectsBadInput)
{
    const ToyModel m = ToyModel::initialized(small_config());
    const std::vector<int> bad = {0, 9, 7};
    EXPECT_THROW(m.forward(bad, 1), ValidationError);
    const std::vector<int> short_seq = {0, 1};
    EXPECT_THROW(m.forward(short_seq, 1), ValidationError);
    const std::vector<int> ok = {0, 1, 7};
    EXPECT_THROW(m.forward(ok, 1, Intervention::skip(2)), ValidationError);
    EXPECT_THROW(m.forward(ok, 1, Intervention::ablate({4})), ValidationError);
}

// --- gradients -----------------------------------------------------------------

TEST(Gradients, MatchCentralDifferences)
{
    const ToyConfig c = small_config();
    ToyModel m = ToyModel::initialized(c);
    const auto data = make_task(c.task, 0).train.head(6);
    VectorXd g, scratch;
    loss_and_gradient(m, data.tokens, data.targets, g);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Index> pick(0, m.params().size() - 1);
    const double step = 1e-3;
    for (int k = 0; k < 100; ++k) {
        const Index i = pick(rng);
        const double keep = m.params()(i);
        m.params()(i) = keep + step;
        const double up = loss_and_gradient(m, data.tokens, data.targets, scratch);
        m.params()(i) = keep - step;
        const double down = loss_and_gradient(m, data.tokens, data.targets, scratch);
        m.params()(i) = keep;
        const double fd = (up - down) / (2 * step);
        EXPECT_LE(std::abs(fd - g(i)), 1e-4 * std::max(std::abs(fd), std::abs(g(i))) + 1e-8) << "coordinate " << i;
    }
}

TEST(Gradients, InputGradientMatchesCentralDifferences)
{
    const ToyConfig c = small_config();
    const ToyModel m = ToyModel::initialized(c);
    const std::vector<int> seq = {3, 5, 7};
    MatrixXd x = m.embed(seq, 1);
    auto logit = [&](const MatrixXd& h0) { return m.forward_embedded(h0, 1).logits(0, 1); };
    const auto f = m.forward_embedded(x, 1);
    MatrixXd dl = MatrixXd::Zero(1, static_cast<Index>(c.vocab()));
    dl(0, 1) = 1.0;
    MatrixXd dh0;
    m.backward(f, {}, dl, {}, nullptr, &dh0);
    for (Index r = 0; r < x.rows(); ++r)
        for (Index k = 0; k < x.cols(); ++k) {
            const double keep = x(r, k);
            x(r, k) = keep + 1e-4;
            const double up = logit(x);
            x(r, k) = keep - 1e-4;
            const double down = logit(x);
            x(r, k) = keep;
            EXPECT_NEAR(dh0(r, k), (up - down) / 2e-4, 1e-6);
        }
}

TEST(Gradients, SkipAndAblationGradientsMatch)
{
    const ToyConfig c = small_config();
    ToyModel m = ToyModel::initialized(c);
    const auto data = make_task(c.task, 0).train.head(4);
    for (const Intervention& iv : {Intervention::skip(0), Intervention::ablate({1, 2})}) {
        VectorXd g, scratch;
        loss_and_gradient(m, data.tokens, data.targets, g, iv);
        for (Index i = 0; i < m.params().size(); i += 97) {
            const double keep = m.params()(i);
            m.params()(i) = keep + 1e-3;
            const double up = loss_and_gradient(m, data.tokens, data.targets, scratch, iv);
            m.params()(i) = keep - 1e-3;
            const double down = loss_and_gradient(m, data.tokens, data.targets, scratch, iv);
            m.params()(i) = keep;
            const double fd = (up - down) / 2e-3;
            EXPECT_LE(std::abs(fd - g(i)), 1e-4 * std::max(std::abs(fd), std::abs(g(i))) + 1e-8);
        }
    }
}

// --- training ------------------------------------------------------------------

TEST(Train, DeterministicCurves)
{
    ToyConfig c = small_config();
    c.steps = 60;
    c.eval_every = 20;
    c.batch = 16;
    c.warmup = 10;
    const auto data = make_task(c.task, c.seed);
    const auto a = train(c, data), b = train(c, data);
    ASSERT_EQ(a.curve.size(), 3u);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
        EXPECT_EQ(a.curve[i].holdout_accuracy, b.curve[i].holdout_accuracy);
    }
    EXPECT_EQ(a.model.params(), b.model.params());
}

TEST(Train, ZeroBudgetIsChance)
{
    ToyConfig c = small_config(97);
    c.steps = 0;
    const auto data = make_task(c.task, c.seed);
    const auto r = train(c, data);
    EXPECT_EQ(r.steps_run, 0u);
    EXPECT_LT(r.holdout.accuracy, 0.05);
    EXPECT_NEAR(r.holdout.loss, std::log(98.0), 1.0);
}

TEST(Train, OneLayerLearnsCopy)
{
    ToyConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 32;
    c.d_mlp = 64;
    c.task.kind = TaskSpec::Kind::kCopy;
    c.task.p = 16;
    c.task.copy_length = 4;
    c.task.samples = 4000;
    c.batch = 64;
    c.steps = 5000;
    c.warmup = 200;
    c.eval_every = 100;
    const auto r = train(c, make_task(c.task, c.seed));
    EXPECT_GE(r.train.accuracy, 0.99);
    EXPECT_LE(r.steps_run, 5000u);
}

TEST(Checkpoint, RoundTripIsExact)
{
    ToyConfig c = small_config();
    c.steps = 20;
    c.eval_every = 10;
    const auto r = train(c, make_task(c.task, 0));
    const auto bytes = encode_checkpoint(r.model, {{"note", "x"}});
    const ToyModel back = decode_checkpoint(bytes);
    EXPECT_EQ(back.params(), r.model.params());
    EXPECT_EQ(nlohmann::json(back.config()), nlohmann::json(r.model.config()));
    auto cut = bytes;
    cut.pop_back();
    EXPECT_THROW(decode_checkpoint(cut), TruncatedError);
    const auto trace_bytes = encode_trace(capture(r.model, make_task(c.task, 0).train.head(4)).heads);
    EXPECT_THROW(decode_checkpoint(trace_bytes), ParseError);
}

// --- residual analyses -----------------------------------------------------------

ResidualTrace one_step(const std::vector<double>& h0, const std::vector<double>& a, const std::vector<double>& mm)
{
    ResidualTrace rt;
    rt.resize(1, 1, h0.size());
    for (std::size_t k = 0; k < h0.size(); ++k) {
        rt.h[k] = h0[k];
        rt.a[k] = a[k];
        rt.m[k] = mm[k];
        rt.h[h0.size() + k] = h0[k] + a[k] + mm[k];
    }
    return rt;
}

TEST(Cosine, SignConventions)
{
    EXPECT_NEAR(cosine_contributions(one_step({1, 0}, {0, 1}, {0, 0})).attention[0], 0.0, 1e-15);
    EXPECT_NEAR(cosine_contributions(one_step({1, 2}, {1, 2}, {0, 0})).attention[0], 1.0, 1e-15);
    EXPECT_NEAR(cosine_contributions(one_step({1, 2}, {-1, -2}, {1, 0})).attention[0], -1.0, 1e-15);
    const auto zero = cosine_contributions(one_step({1, 2}, {1, 1}, {0, 0}));
    EXPECT_TRUE(std::isnan(zero.mlp[0]));
    EXPECT_EQ(zero.skipped_terms[0], 1u);
}

TEST(Cosine, RandomIsotropicWritesAreNearOrthogonal)
{
    const std::size_t d = 256, steps = 200;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    ResidualTrace rt;
    rt.resize(steps, 1, d);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t k = 0; k < d; ++k) {
            rt.h[t * 2 * d + k] = n(rng);
            rt.a[t * d + k] = n(rng);
            rt.m[t * d + k] = n(rng);
            rt.h[t * 2 * d + d + k] = rt.h[t * 2 * d + k] + rt.a[t * d + k] + rt.m[t * d + k];
        }
    const auto p = cosine_contributions(rt);
    EXPECT_LE(std::abs(p.attention[0]), 3.0 / std::sqrt(static_cast<double>(d)));
    EXPECT_LE(std::abs(p.mlp[0]), 3.0 / std::sqrt(static_cast<double>(d)));
}

TEST(Energy, ClosedForms)
{
    EXPECT_NEAR(energy_profile(one_step({1, 2}, {0, 0}, {0, 0})).energy[0], 0.0, 1e-15);
    EXPECT_NEAR(energy_profile(one_step({1, 0}, {-1, 1}, {0, 0})).energy[0], 1.0, 1e-15);
    EXPECT_NEAR(energy_profile(one_step({1, 2}, {0.5, 1}, {0.5, 1})).energy[0], 0.0, 1e-15);
    const auto z = energy_profile(one_step({0, 0}, {1, 0}, {0, 0}));
    EXPECT_TRUE(std::isnan(z.energy[0]));
    EXPECT_EQ(z.skipped_steps[0], 1u);
}

// --- interventions ---------------------------------------------------------------

TEST(Skip, ZeroWritingLayerCausesNoDisturbance)
{
    ToyConfig c = small_config();
    c.layers = 3;
    ToyModel m = ToyModel::initialized(c);
    const auto& l0 = m.layout().layers[0];
    view(m.params(), l0.wo).setZero();
    view(m.params(), l0.w2).setZero();
    view(m.params(), l0.b2).setZero();
    const auto data = make_task(c.task, 0).train.head(10);
    const auto d = skip_disturbance(m, data, 0);
    EXPECT_TRUE(std::isnan(d.disturbance[0]));
    EXPECT_EQ(d.disturbance[1], 0.0);
    EXPECT_EQ(d.disturbance[2], 0.0);
    EXPECT_GT(skip_disturbance(ToyModel::initialized(c), data, 0).mean_downstream(), 0.0);
}

TEST(Skip, LastLayerHasNoDownstream)
{
    const ToyConfig c = small_config();
    const auto d = skip_disturbance(ToyModel::initialized(c), make_task(c.task, 0).train.head(4), 1);
    EXPECT_TRUE(std::isnan(d.disturbance[0]));
    EXPECT_TRUE(std::isnan(d.disturbance[1]));
    EXPECT_TRUE(std::isnan(d.mean_downstream()));
    EXPECT_THROW(skip_disturbance(ToyModel::initialized(c), make_task(c.task, 0).train.head(4), 2), ValidationError);
}

HeadScoreTable fake_scores(std::size_t n, std::size_t h)
{
    PairAtomsTable t;
    t.heads = n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            PairAtoms p{i, j, {}};
            p.atoms(Antichain::kSyn, Antichain::kSyn) = static_cast<double>(i + j);
            t.pairs.push_back(p);
        }
    std::vector<int> layer(n);
    for (std::size_t i = 0; i < n; ++i) layer[i] = static_cast<int>(i / h);
    return score_heads(t, layer, h);
}

TEST(Ablation, EndpointsAndOrders)
{
    const ToyConfig c = small_config();
    const ToyModel m = ToyModel::initialized(c);
    const auto eval = make_task(c.task, 0).holdout;
    const auto s = fake_scores(4, 2);
    EXPECT_EQ(ablation_sequence(s, AblationOrder::kAbstractFirst, 0).front(), 3u);
    EXPECT_EQ(ablation_sequence(s, AblationOrder::kMemoryFirst, 0).front(), 0u);
    auto r = ablation_sequence(s, AblationOrder::kRandom, 1);
    std::sort(r.begin(), r.end());
    EXPECT_EQ(r, (std::vector<std::size_t>{0, 1, 2, 3}));

    const auto pts = ablate_and_eval(m, s, AblationOrder::kAbstractFirst, {0, 4}, eval);
    EXPECT_EQ(pts[0].loss, evaluate(m, eval).loss);
    EXPECT_EQ(pts[0].loss_ratio, 1.0);
    // with every head silenced the final position cannot see its operands
    const auto all_dead = capture(m, eval, Intervention::ablate({0, 1, 2, 3}));
    for (double v : all_dead.heads.values) EXPECT_EQ(v, 0.0);
    EXPECT_LE(pts[1].accuracy, 0.35);
    EXPECT_THROW(ablate_and_eval(m, s, AblationOrder::kRandom, {5}, eval), ValidationError);
}

// --- integrated gradients ---------------------------------------------------------

TEST(IntegratedGradients, LinearModelIsExact)
{
    std::mt19937_64 rng(6);
    const MatrixXd w = MatrixXd::Random(3, 5), x = MatrixXd::Random(3, 5), base = MatrixXd::Random(3, 5);
    for (std::size_t m : {8u, 13u, 256u}) {
        const MatrixXd ig = integrated_gradients(x, base, m, [&](const std::vector<MatrixXd>& pts) {
            return std::vector<MatrixXd>(pts.size(), w);
        });
        EXPECT_LT((ig - w.cwiseProduct(x - base)).cwiseAbs().maxCoeff(), 1e-14);
    }
    EXPECT_THROW(integrated_gradients(x, base, 4, [](const std::vector<MatrixXd>& p) { return p; }), ValidationError);
}

TEST(IntegratedGradients, BaselineInputGivesZero)
{
    const MatrixXd x = MatrixXd::Random(2, 3);
    const MatrixXd ig = integrated_gradients(x, x, 16, [](const std::vector<MatrixXd>& pts) {
        return std::vector<MatrixXd>(pts.size(), MatrixXd::Ones(2, 3));
    });
    EXPECT_EQ(ig.cwiseAbs().maxCoeff(), 0.0);
}

TEST(IntegratedGradients, CompletenessImprovesWithSteps)
{
    const ToyConfig c = small_config();
    const ToyModel m = ToyModel::initialized(c);
    const std::vector<int> seq = {2, 4, 7};
    const double r64 = integrated_gradients(m, seq, 6, 64).completeness_residual();
    const double r256 = integrated_gradients(m, seq, 6, 256).completeness_residual();
    EXPECT_LT(r256, r64);
    EXPECT_LT(r256, 0.02);
    EXPECT_EQ(integrated_gradients(m, seq, 6, 16).attribution.rows(), 3);
}

TEST(IntegratedGradients, ZeroTokenEmbeddingIsTheBaseline)
{
    const ToyConfig c = small_config();
    ToyModel m = ToyModel::initialized(c);
    view(m.params(), m.layout().embed).setZero();
    const std::vector<int> seq = {2, 4, 7};
    const auto r = integrated_gradients(m, seq, 6, 32);
    EXPECT_EQ(r.attribution.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.f_input, r.f_baseline);
}

} // namespace
} // namespace phid::toy
