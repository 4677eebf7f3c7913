#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "phid/numeric.hpp"
#include "phid/toy/model.hpp"
#include "phid/toy/tasks.hpp"
#include "phid/traces.hpp"

namespace phid::toy {

inline constexpr std::size_t kEvalChunk = 256;

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

/// Loss and accuracy over a whole dataset, in fixed-size chunks.
inline EvalResult evaluate(const ToyModel& m, const Dataset& data, const Intervention& iv = {})
{
    if (data.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
    CompensatedSum loss;
    std::size_t correct = 0;
    ForwardPass f;
    for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
        const std::size_t e = std::min(data.size(), b + kEvalChunk);
        m.forward(data.rows(b, e), e - b, iv, f);
        const std::span<const int> tg(data.targets.data() + b, e - b);
        loss.add(cross_entropy(f.logits, tg) * static_cast<double>(e - b));
        correct += correct_count(f.logits, tg);
    }
    const double n = static_cast<double>(data.size());
    return {loss.value() / n, static_cast<double>(correct) / n, data.size()};
}

/// Buffers kept across training steps.
struct Workspace {
    ForwardPass forward;
    BackwardScratch backward;
    MatrixXd dlogits;
};

/// Mean loss over one batch; writes its gradient into `grad`.
inline double loss_and_gradient(const ToyModel& m, std::span<const int> tokens, std::span<const int> targets,
                                VectorXd& grad, Workspace& ws, const Intervention& iv = {})
{
    m.forward(tokens, targets.size(), iv, ws.forward);
    const double loss = cross_entropy(ws.forward.logits, targets, &ws.dlogits);
    grad.setZero(static_cast<Index>(m.layout().total));
    m.backward(ws.forward, tokens, ws.dlogits, iv, &grad, ws.backward);
    return loss;
}

inline double loss_and_gradient(const ToyModel& m, std::span<const int> tokens, std::span<const int> targets,
                                VectorXd& grad, const Intervention& iv = {})
{
    Workspace ws;
    return loss_and_gradient(m, tokens, targets, grad, ws, iv);
}

/// Decoupled weight decay applies to matrices only, not to gains or biases.
class AdamW {
public:
    AdamW(const ToyModel& m, const ToyConfig& c)
        : cfg_(c), m_(VectorXd::Zero(m.params().size())), v_(VectorXd::Zero(m.params().size())),
          decay_(VectorXd::Zero(m.params().size()))
    {
        const auto& lay = m.layout();
        auto mark = [&](const Block& b) { decay_.segment(static_cast<Index>(b.offset), static_cast<Index>(b.size())).setOnes(); };
        mark(lay.embed);
        mark(lay.pos);
        for (const auto& l : lay.layers)
            for (const Block* b : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2}) mark(*b);
        mark(lay.wout);
    }

    /// Linear warmup to lr, then constant.
    double rate(std::size_t step) const
    {
        if (cfg_.warmup == 0) return cfg_.lr;
        return cfg_.lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg_.warmup));
    }

    void step(VectorXd& params, const VectorXd& grad)
    {
        ++t_;
        const double lr = rate(t_ - 1);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        params.array() -= lr * cfg_.weight_decay * decay_.array() * params.array();
        params.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.adam_eps);
    }

private:
    ToyConfig cfg_;
    VectorXd m_, v_, decay_;
    std::size_t t_ = 0;
};

struct CurvePoint {
    std::size_t step = 0;
    double train_loss = 0.0; ///< mean batch loss since the previous point
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    double holdout_loss = 0.0;
};

struct TrainResult {
    ToyModel model;
    std::vector<CurvePoint> curve;
    std::size_t steps_run = 0;
    EvalResult train;
    EvalResult holdout;
    bool reached_target = false;
};

/// Rounds every parameter to float32 so a checkpoint reproduces the model exactly.
inline void round_to_float(VectorXd& p)
{
    for (Index i = 0; i < p.size(); ++i) p(i) = static_cast<double>(static_cast<float>(p(i)));
}

/// Cross-entropy training with AdamW on the configured task. Batches cycle
/// through seeded permutations of the training split. Stops at the budget or
/// once full-train accuracy reaches target_accuracy at an evaluation point.
inline TrainResult train(const ToyConfig& cfg, const TaskSplit& data,
                         const std::function<void(const CurvePoint&)>& on_eval = {})
{
    cfg.validate();
    TrainResult r{ToyModel::initialized(cfg), {}, 0, {}, {}, false};
    ToyModel& m = r.model;
    AdamW opt(m, cfg);
    std::mt19937_64 rng(cfg.seed ^ 0x747261696eULL);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    const std::size_t b = std::min(cfg.batch, data.train.size());
    std::vector<int> tokens(b * data.train.seq_len), targets(b);
    VectorXd grad;
    Workspace ws;
    CompensatedSum window;
    std::size_t window_n = 0;

    auto checkpoint = [&](std::size_t step) {
        const auto tr = evaluate(m, data.train), ho = evaluate(m, data.holdout);
        CurvePoint p{step, window_n ? window.value() / static_cast<double>(window_n) : tr.loss, tr.accuracy,
                     ho.accuracy, ho.loss};
        r.curve.push_back(p);
        if (on_eval) on_eval(p);
        window = {};
        window_n = 0;
        return tr.accuracy >= cfg.target_accuracy;
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (std::size_t i = 0; i < b; ++i) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const std::size_t id = order[cursor++];
            std::copy_n(data.train.row(id).begin(), data.train.seq_len, tokens.begin() + static_cast<std::ptrdiff_t>(i * data.train.seq_len));
            targets[i] = data.train.targets[id];
        }
        const double loss = loss_and_gradient(m, tokens, targets, grad, ws);
        if (!std::isfinite(loss) || !grad.allFinite()) {
            std::ostringstream msg;
            msg << "training diverged at step " << step << ": loss " << loss << ", grad norm " << grad.norm()
                << ", lr " << opt.rate(step) << ", param norm " << m.params().norm();
            throw NumericalError(msg.str());
        }
        opt.step(m.params(), grad);
        window.add(loss);
        ++window_n;
        r.steps_run = step + 1;
        if ((step + 1) % cfg.eval_every == 0 && checkpoint(step + 1)) {
            r.reached_target = true;
            break;
        }
    }
    round_to_float(m.params());
    r.train = evaluate(m, data.train);
    r.holdout = evaluate(m, data.holdout);
    r.reached_target = r.train.accuracy >= cfg.target_accuracy;
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints reuse the trace container with kind "checkpoint".

inline std::vector<std::uint8_t> encode_checkpoint(const ToyModel& m, const nlohmann::json& extra = {})
{
    Container c;
    c.header = {{"kind", "checkpoint"}, {"config", m.config()}, {"param_count", m.layout().total}};
    if (!extra.is_null()) c.header["run_config"] = extra;
    c.payload.resize(m.layout().total);
    for (std::size_t i = 0; i < c.payload.size(); ++i) c.payload[i] = static_cast<float>(m.params()(static_cast<Index>(i)));
    return encode_container(c);
}

inline ToyModel decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    const Container c = decode_container(bytes, [](const nlohmann::json& h) -> std::size_t {
        if (h.value("kind", std::string{}) != "checkpoint") throw ParseError("file is not a model checkpoint");
        if (!h.contains("param_count") || !h["param_count"].is_number_unsigned()) throw ParseError("checkpoint header missing param_count");
        return h["param_count"].get<std::size_t>();
    });
    ToyConfig cfg;
    try {
        cfg = c.header.at("config").get<ToyConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint config unreadable: ") + e.what());
    }
    ToyModel m(cfg);
    if (m.layout().total != c.payload.size()) {
        throw ShapeMismatchError("checkpoint holds " + std::to_string(c.payload.size()) + " parameters, config implies " +
                                 std::to_string(m.layout().total));
    }
    for (std::size_t i = 0; i < c.payload.size(); ++i) m.params()(static_cast<Index>(i)) = c.payload[i];
    if (!m.params().allFinite()) throw NumericalError("checkpoint contains non-finite weights");
    return m;
}

inline void write_checkpoint(const ToyModel& m, const std::filesystem::path& path, const nlohmann::json& extra = {})
{
    write_file_bytes(path, encode_checkpoint(m, extra));
}

inline ToyModel read_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(read_file_bytes(path));
}

} // namespace phid::toy
