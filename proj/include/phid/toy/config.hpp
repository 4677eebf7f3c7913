#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "phid/error.hpp"

namespace phid::toy {

/// Synthetic task. Every sequence ends in '=' (token p); the target is read
/// off the logits at that final position.
struct TaskSpec {
    enum class Kind { kModularAddition, kChain, kCopy };

    Kind kind = Kind::kModularAddition;
    std::size_t p = 97;
    std::size_t chain_steps = 2;  ///< kChain: x0 + x1 + ... + x_k mod p
    std::size_t copy_length = 4;  ///< kCopy: sequence length before '='
    std::size_t samples = 8192;   ///< kChain / kCopy dataset size
    double train_fraction = 0.5;

    std::size_t vocab() const noexcept { return p + 1; }
    int equals_token() const noexcept { return static_cast<int>(p); }

    std::size_t seq_len() const noexcept
    {
        switch (kind) {
        case Kind::kModularAddition: return 3;
        case Kind::kChain: return chain_steps + 2;
        default: return copy_length + 1;
        }
    }
};

inline const char* task_kind_name(TaskSpec::Kind k)
{
    switch (k) {
    case TaskSpec::Kind::kModularAddition: return "modular_addition";
    case TaskSpec::Kind::kChain: return "chain";
    default: return "copy";
    }
}

inline TaskSpec::Kind parse_task_kind(const std::string& s)
{
    if (s == "modular_addition") return TaskSpec::Kind::kModularAddition;
    if (s == "chain") return TaskSpec::Kind::kChain;
    if (s == "copy") return TaskSpec::Kind::kCopy;
    throw ValidationError("unknown task '" + s + "' (expected modular_addition, chain or copy)");
}

inline bool is_prime(std::size_t n)
{
    if (n < 2) return false;
    for (std::size_t d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

struct ToyConfig {
    std::size_t layers = 6;
    std::size_t heads = 4;
    std::size_t d_model = 64;
    std::size_t d_mlp = 256;
    TaskSpec task;
    std::uint64_t seed = 0;

    // training
    std::size_t steps = 20000; ///< budget; training stops early at target_accuracy
    std::size_t batch = 256;
    double lr = 1e-3;
    std::size_t warmup = 1000;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-8;
    double target_accuracy = 0.99;
    std::size_t eval_every = 250;

    double norm_eps = 1e-5;
    double init_std = 0.02;

    std::size_t d_head() const noexcept { return d_model / heads; }
    std::size_t vocab() const noexcept { return task.vocab(); }
    std::size_t seq_len() const noexcept { return task.seq_len(); }
    std::size_t total_heads() const noexcept { return layers * heads; }

    void validate() const
    {
        if (layers == 0 || heads == 0 || d_model == 0 || d_mlp == 0) throw ValidationError("model dimensions must be positive");
        if (d_model % heads != 0) {
            throw ValidationError("d_model " + std::to_string(d_model) + " is not a multiple of heads " + std::to_string(heads));
        }
        if (task.kind != TaskSpec::Kind::kCopy && !is_prime(task.p)) {
            throw ValidationError("modulus p = " + std::to_string(task.p) + " is not prime");
        }
        if (task.p < 2) throw ValidationError("alphabet size p must be at least 2");
        if (!(task.train_fraction > 0.0 && task.train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
        if (task.kind == TaskSpec::Kind::kChain && task.chain_steps == 0) throw ValidationError("chain needs at least one step");
        if (task.kind == TaskSpec::Kind::kCopy && task.copy_length == 0) throw ValidationError("copy_length must be positive");
        if (batch == 0) throw ValidationError("batch must be positive");
        if (!(lr > 0.0) || !(norm_eps > 0.0) || weight_decay < 0.0) throw ValidationError("lr and norm_eps must be positive");
        if (eval_every == 0) throw ValidationError("eval_every must be positive");
    }
};

inline void to_json(nlohmann::json& j, const TaskSpec& t)
{
    j = {{"kind", task_kind_name(t.kind)},   {"p", t.p},
         {"chain_steps", t.chain_steps},      {"copy_length", t.copy_length},
         {"samples", t.samples},              {"train_fraction", t.train_fraction}};
}

inline void from_json(const nlohmann::json& j, TaskSpec& t)
{
    t.kind = parse_task_kind(j.value("kind", std::string(task_kind_name(t.kind))));
    t.p = j.value("p", t.p);
    t.chain_steps = j.value("chain_steps", t.chain_steps);
    t.copy_length = j.value("copy_length", t.copy_length);
    t.samples = j.value("samples", t.samples);
    t.train_fraction = j.value("train_fraction", t.train_fraction);
}

inline void to_json(nlohmann::json& j, const ToyConfig& c)
{
    j = {{"layers", c.layers},
         {"heads", c.heads},
         {"d_model", c.d_model},
         {"d_head", c.d_head()},
         {"d_mlp", c.d_mlp},
         {"vocab", c.vocab()},
         {"seq_len", c.seq_len()},
         {"task", c.task},
         {"seed", c.seed},
         {"steps", c.steps},
         {"batch", c.batch},
         {"lr", c.lr},
         {"warmup", c.warmup},
         {"weight_decay", c.weight_decay},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"target_accuracy", c.target_accuracy},
         {"eval_every", c.eval_every},
         {"norm_eps", c.norm_eps},
         {"init_std", c.init_std}};
}

/// Missing keys keep their defaults; derived keys (d_head, vocab, seq_len) are ignored.
inline void from_json(const nlohmann::json& j, ToyConfig& c)
{
    if (!j.is_object()) throw ValidationError("toy config must be a JSON object");
    try {
        c.layers = j.value("layers", c.layers);
        c.heads = j.value("heads", c.heads);
        c.d_model = j.value("d_model", c.d_model);
        c.d_mlp = j.value("d_mlp", c.d_mlp);
        if (j.contains("task")) c.task = j["task"].get<TaskSpec>();
        c.seed = j.value("seed", c.seed);
        c.steps = j.value("steps", c.steps);
        c.batch = j.value("batch", c.batch);
        c.lr = j.value("lr", c.lr);
        c.warmup = j.value("warmup", c.warmup);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.target_accuracy = j.value("target_accuracy", c.target_accuracy);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.norm_eps = j.value("norm_eps", c.norm_eps);
        c.init_std = j.value("init_std", c.init_std);
    } catch (const nlohmann::json::type_error& e) {
        throw ValidationError(std::string("toy config has a field of the wrong type: ") + e.what());
    }
}

} // namespace phid::toy
