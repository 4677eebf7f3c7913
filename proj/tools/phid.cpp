#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "phid/pipeline.hpp"

namespace {

using namespace phid;
using phid::pipeline::Artifacts;
using phid::report::RunConfig;

enum Exit : int { kOk = 0, kParse = 2, kValidation = 3, kNumerical = 4 };

struct Common {
    bool copula = true;
    double ridge = 1e-8;
    std::string pairs = "all";
    std::string units = "nats";
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string out = ".";
    std::string estimator = "gaussian";
};

void add_common(CLI::App* app, Common& c, bool estimator_flags)
{
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "Seed for sampling, layout and training")->capture_default_str();
    app->add_option("--threads", c.threads, "Worker cap")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--units", c.units, "Report units")->capture_default_str()->check(CLI::IsMember({"bits", "nats"}));
    if (!estimator_flags) return;
    app->add_flag("--copula,!--no-copula", c.copula, "Gaussian-copula transform of each series")->capture_default_str();
    app->add_option("--ridge", c.ridge, "Covariance ridge")->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--pairs", c.pairs, "Pair strategy: all, auto or sampled:k")->capture_default_str();
    app->add_option("--estimator", c.estimator, "MI estimator")
        ->capture_default_str()
        ->check(CLI::IsMember({"gaussian", "discrete"}));
}

RunConfig make_rc(const std::string& sub, const std::vector<std::string>& inputs, const Common& c)
{
    RunConfig rc;
    rc.subcommand = sub;
    rc.inputs = inputs;
    rc.out_dir = c.out;
    rc.seed = c.seed;
    rc.copula = c.copula;
    rc.ridge = c.ridge;
    rc.pairs = c.pairs;
    rc.units = c.units == "bits" ? Units::kBits : Units::kNats;
    rc.threads = c.threads;
    rc.params["estimator"] = c.estimator;
    return rc;
}

std::string now_utc()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return o.str();
}

/// Writes artifacts and appends a timestamped entry to run.log beside them.
void emit(const Artifacts& arts, const RunConfig& rc, double seconds)
{
    pipeline::write_artifacts(arts, rc.out_dir);
    std::ofstream log(std::filesystem::path(rc.out_dir) / "run.log", std::ios::app);
    log << now_utc() << ' ' << rc.subcommand << " seconds=" << std::fixed << std::setprecision(3) << seconds;
    for (const auto& a : arts) log << ' ' << a.name;
    log << '\n';
    for (const auto& a : arts) std::cout << (std::filesystem::path(rc.out_dir) / a.name).string() << '\n';
}

TraceTensor load_head_trace(const std::string& path)
{
    auto t = read_head_trace(path);
    t.validate();
    return t;
}

std::vector<std::size_t> parse_ks(const std::string& s)
{
    std::vector<std::size_t> ks;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) {
        try {
            std::size_t used = 0;
            const long v = std::stol(tok, &used);
            if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
            ks.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ParseError("bad --ks entry '" + tok + "'");
        }
    }
    if (ks.empty()) throw ParseError("--ks is empty");
    return ks;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Information-dynamics analysis of attention heads"};
    app.require_subcommand(1);

    Common dc, sc, gc, cc, tc;
    std::string trace_in, graph_in, kind = "abstract", easy_in, hard_in;
    double q = 0.25;

    auto* decompose = app.add_subcommand("decompose", "Per-pair ΦID atoms of a head trace");
    decompose->add_option("trace", trace_in, "Head trace file")->required();
    add_common(decompose, dc, true);

    auto* scores = app.add_subcommand("scores", "Abstract/memory head scores and layer profile");
    scores->add_option("trace", trace_in, "Head trace file")->required();
    add_common(scores, sc, true);

    auto* graph = app.add_subcommand("graph", "Head graph metrics, communities and layout");
    graph->add_option("input", graph_in, "Head trace or atoms CSV")->required();
    graph->add_option("--kind", kind, "Edge weights")->capture_default_str()->check(
        CLI::IsMember({"abstract", "memory", "combined", "syn", "red"}));
    add_common(graph, gc, true);

    auto* compare = app.add_subcommand("compare", "Separation of top and bottom heads for two traces");
    compare->add_option("easy", easy_in, "Trace of the easier task")->required();
    compare->add_option("hard", hard_in, "Trace of the harder task")->required();
    compare->add_option("--q", q, "Fraction of heads in each group")->capture_default_str();
    add_common(compare, cc, true);

    auto* toy = app.add_subcommand("toy", "Built-in transformer experiments");
    toy->require_subcommand(1);

    std::string config_in, task = "modular_addition", checkpoint, split = "holdout", ks_in = "0,1,2,3,5,8,12";
    toy::ToyConfig cfg;
    std::size_t samples = 512, eval_samples = 0, random_seeds = 5, index = 0, ig_steps = 256;
    bool residual = false;

    auto* train = toy->add_subcommand("train", "Train the toy model");
    train->add_option("--config", config_in, "JSON file with toy settings");
    train->add_option("--task", task, "Task")->capture_default_str()->check(CLI::IsMember({"modular_addition", "modadd", "chain", "copy"}));
    train->add_option("--p", cfg.task.p, "Modulus")->capture_default_str();
    train->add_option("--chain-steps", cfg.task.chain_steps, "Additions per chain")->capture_default_str();
    train->add_option("--layers", cfg.layers)->capture_default_str();
    train->add_option("--heads", cfg.heads)->capture_default_str();
    train->add_option("--d-model", cfg.d_model)->capture_default_str();
    train->add_option("--d-mlp", cfg.d_mlp)->capture_default_str();
    train->add_option("--steps", cfg.steps, "Step budget")->capture_default_str();
    train->add_option("--batch", cfg.batch)->capture_default_str();
    train->add_option("--lr", cfg.lr)->capture_default_str();
    add_common(train, tc, false);

    auto* trace = toy->add_subcommand("trace", "Capture head and residual traces");
    auto* skip = toy->add_subcommand("skip", "Layer-skip disturbance");
    auto* ablate = toy->add_subcommand("ablate", "Cumulative head ablation");
    auto* ig = toy->add_subcommand("ig", "Integrated gradients for one sequence");
    for (auto* s : {trace, skip, ablate, ig}) {
        s->add_option("checkpoint", checkpoint, "Model checkpoint")->required();
        s->add_option("--split", split, "Dataset split")->capture_default_str()->check(CLI::IsMember({"train", "holdout"}));
    }
    for (auto* s : {trace, skip, ablate})
        s->add_option("--samples", samples, "Sequences to use (0 = all)")->capture_default_str();
    trace->add_flag("--residual", residual, "Also capture the residual stream");
    ablate->add_option("--ks", ks_in, "Comma-separated head counts")->capture_default_str();
    ablate->add_option("--random-seeds", random_seeds, "Random orders to average")->capture_default_str();
    ablate->add_option("--eval-samples", eval_samples, "Evaluation sequences (0 = all)")->capture_default_str();
    ig->add_option("--index", index, "Sequence index in the split")->capture_default_str();
    ig->add_option("--m", ig_steps, "Riemann steps")->capture_default_str();
    add_common(trace, tc, false);
    add_common(skip, tc, false);
    add_common(ablate, tc, true);
    add_common(ig, tc, false);

    // The config file fills the defaults; flags given on the command line win.
    try {
        for (int i = 1; i < argc; ++i) {
            const std::string a = argv[i];
            std::string path;
            if (a == "--config" && i + 1 < argc) path = argv[i + 1];
            else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
            if (path.empty()) continue;
            const auto bytes = read_file_bytes(path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(bytes.begin(), bytes.end());
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(std::string("config is not valid JSON: ") + e.what());
            }
            cfg = j.get<toy::ToyConfig>();
            task = toy::task_kind_name(cfg.task.kind);
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kValidation;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kParse;
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

        if (*decompose) {
            const auto rc = make_rc("decompose", {trace_in}, dc);
            emit(pipeline::cmd_decompose(load_head_trace(trace_in), rc), rc, seconds());
        } else if (*scores) {
            const auto rc = make_rc("scores", {trace_in}, sc);
            emit(pipeline::cmd_scores(load_head_trace(trace_in), rc), rc, seconds());
        } else if (*graph) {
            auto rc = make_rc("graph", {graph_in}, gc);
            rc.params["kind"] = kind;
            const auto bytes = read_file_bytes(graph_in);
            const bool is_trace = bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, kTraceMagic);
            PairAtomsTable table;
            std::vector<int> layer;
            if (is_trace) {
                const auto t = load_head_trace(graph_in);
                table = pipeline::decompose_trace(t, rc);
                layer = t.layer_of_head;
            } else {
                std::tie(table, layer) = pipeline::read_atoms_csv(std::string(bytes.begin(), bytes.end()));
            }
            emit(pipeline::cmd_graph(table, layer, pipeline::parse_graph_kind(kind), rc), rc, seconds());
        } else if (*compare) {
            auto rc = make_rc("compare", {easy_in, hard_in}, cc);
            rc.params["q"] = q;
            emit(pipeline::cmd_compare(load_head_trace(easy_in), load_head_trace(hard_in), rc), rc, seconds());
        } else if (*train) {
            cfg.task.kind = toy::parse_task_kind(task == "modadd" ? "modular_addition" : task);
            cfg.seed = tc.seed;
            auto rc = make_rc("toy train", config_in.empty() ? std::vector<std::string>{} : std::vector{config_in}, tc);
            rc.params["toy"] = cfg;
            const auto out = pipeline::cmd_toy_train(cfg, rc);
            emit(out.artifacts, rc, seconds());
            if (!out.result.reached_target)
                std::cerr << "warning: target accuracy " << cfg.target_accuracy << " not reached (train accuracy "
                          << out.result.train.accuracy << ")\n";
        } else {
            const auto model = toy::read_checkpoint(checkpoint);
            std::string sub;
            for (auto* s : {trace, skip, ablate, ig})
                if (*s) sub = s->get_name();
            auto rc = make_rc("toy " + sub, {checkpoint}, tc);
            rc.params["split"] = split;
            if (*trace) {
                rc.params["samples"] = samples;
                rc.params["residual"] = residual;
                emit(pipeline::cmd_toy_trace(model, pipeline::toy_dataset(model, split, samples), residual, rc), rc,
                     seconds());
            } else if (*skip) {
                rc.params["samples"] = samples;
                emit(pipeline::cmd_toy_skip(model, pipeline::toy_dataset(model, split, samples), rc), rc, seconds());
            } else if (*ablate) {
                const auto ks = parse_ks(ks_in);
                rc.params["samples"] = samples;
                rc.params["ks"] = ks;
                rc.params["random_seeds"] = random_seeds;
                rc.params["eval_samples"] = eval_samples;
                const auto probe = pipeline::toy_dataset(model, split, samples);
                const auto eval = pipeline::toy_dataset(model, "holdout", eval_samples);
                emit(pipeline::cmd_toy_ablate(model, probe, eval, ks, random_seeds, rc), rc, seconds());
            } else {
                rc.params["index"] = index;
                rc.params["m"] = ig_steps;
                emit(pipeline::cmd_toy_ig(model, pipeline::toy_dataset(model, split, 0), index, ig_steps, rc), rc,
                     seconds());
            }
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    }
    return kOk;
}
