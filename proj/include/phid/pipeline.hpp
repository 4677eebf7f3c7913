#pragma once

#include <charconv>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "phid/headscore.hpp"
#include "phid/infodyn.hpp"
#include "phid/netgraph.hpp"
#include "phid/report.hpp"
#include "phid/toymodel.hpp"
#include "phid/traces.hpp"

namespace phid::pipeline {

using report::RunConfig;

/// A named output file. Binary artifacts keep their bytes in `content` too.
struct Artifact {
    std::string name;
    std::string content;
};

using Artifacts = std::vector<Artifact>;

inline void write_artifacts(const Artifacts& arts, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    for (const auto& a : arts) report::write_text(dir / a.name, a.content);
}

inline std::string bytes_to_string(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

// --- flag translation ----------------------------------------------------------

inline PairStrategy parse_pairs(const std::string& value, std::size_t heads, std::uint64_t seed)
{
    if (value == "all") return PairStrategy::all();
    if (value == "auto") return PairStrategy::automatic(heads, seed);
    if (value.rfind("sampled:", 0) == 0) {
        std::size_t k = 0;
        const char* b = value.data() + 8;
        const char* e = value.data() + value.size();
        const auto [p, err] = std::from_chars(b, e, k);
        if (err != std::errc{} || p != e || k == 0) throw ParseError("bad --pairs value '" + value + "'");
        return PairStrategy::sampled(k, seed);
    }
    throw ParseError("bad --pairs value '" + value + "' (expected all, auto or sampled:k)");
}

inline DecomposeOptions decompose_options(const RunConfig& rc)
{
    DecomposeOptions o;
    o.copula = rc.copula;
    o.phiid.ridge = rc.ridge;
    o.threads = std::max(1u, rc.threads);
    if (rc.params.value("estimator", std::string("gaussian")) == "discrete") o.phiid.estimator = Estimator::kDiscrete;
    if (rc.params.value("pooling", std::string("pooled")) == "per_segment") o.pooling = Pooling::kPerSegment;
    return o;
}

// --- decompose ---------------------------------------------------------------------

inline std::vector<std::string> atom_columns()
{
    std::vector<std::string> cols;
    for (Antichain s : kAntichains)
        for (Antichain t : kAntichains) cols.push_back(std::string(name(s)) + "_" + std::string(name(t)));
    return cols;
}

inline PairAtomsTable decompose_trace(const TraceTensor& trace, const RunConfig& rc)
{
    trace.validate();
    const auto opt = decompose_options(rc);
    const auto strategy = parse_pairs(rc.pairs, trace.heads(), rc.seed);
    return opt.phiid.estimator == Estimator::kDiscrete ? pairwise_atoms(trace, strategy, opt)
                                                       : pairwise_atoms(standardize(trace).trace, strategy, opt);
}

inline std::string atoms_csv(const PairAtomsTable& t, const std::vector<int>& layer_of_head, const RunConfig& rc)
{
    std::vector<std::string> cols = {"head_i", "head_j", "layer_i", "layer_j", "tdmi"};
    for (auto& c : atom_columns()) cols.push_back(c);
    cols.push_back("degenerate");
    report::Csv csv(rc, cols);
    csv.comment("heads", t.heads);
    csv.comment("units", units_name(rc.units));
    for (const auto& p : t.pairs) {
        std::vector<report::Cell> row = {static_cast<long long>(p.i), static_cast<long long>(p.j),
                                         static_cast<long long>(layer_of_head.at(p.i)),
                                         static_cast<long long>(layer_of_head.at(p.j)),
                                         to_units(p.atoms.tdmi, rc.units)};
        for (Antichain s : kAntichains)
            for (Antichain g : kAntichains) row.emplace_back(to_units(p.atoms(s, g), rc.units));
        row.emplace_back(static_cast<long long>(p.atoms.degenerate));
        csv.row(row);
    }
    return csv.str();
}

/// Reads an atoms CSV back into nats. Returns the table and layer of each head.
inline std::pair<PairAtomsTable, std::vector<int>> read_atoms_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    PairAtomsTable t;
    Units units = Units::kNats;
    std::vector<std::string> header;
    std::vector<int> layer;
    auto parse_double = [](const std::string& s) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw ParseError("bad number '" + s + "' in atoms CSV");
        }
        if (used != s.size()) throw ParseError("bad number '" + s + "' in atoms CSV");
        return v;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# heads: ", 0) == 0) t.heads = static_cast<std::size_t>(parse_double(line.substr(9)));
            if (line.rfind("# units: ", 0) == 0 && line.find("bits") != std::string::npos) units = Units::kBits;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (header.empty()) {
            header = cells;
            if (header.size() != 22 || header[0] != "head_i" || header[4] != "tdmi") throw ParseError("not an atoms CSV");
            continue;
        }
        if (cells.size() != header.size()) throw ParseError("atoms CSV row has " + std::to_string(cells.size()) + " cells");
        const double scale = units == Units::kBits ? kLn2 : 1.0;
        PairAtoms p;
        p.i = static_cast<std::size_t>(parse_double(cells[0]));
        p.j = static_cast<std::size_t>(parse_double(cells[1]));
        const auto li = static_cast<int>(parse_double(cells[2])), lj = static_cast<int>(parse_double(cells[3]));
        p.atoms.tdmi = parse_double(cells[4]) * scale;
        std::size_t c = 5;
        for (Antichain s : kAntichains)
            for (Antichain g : kAntichains) p.atoms(s, g) = parse_double(cells[c++]) * scale;
        p.atoms.degenerate = cells[21] == "1";
        const std::size_t need = std::max(p.i, p.j) + 1;
        if (layer.size() < need) layer.resize(need, -1);
        layer[p.i] = li;
        layer[p.j] = lj;
        t.pairs.push_back(p);
    }
    if (header.empty()) throw ParseError("atoms CSV has no header");
    if (t.heads == 0) t.heads = layer.size();
    if (layer.size() > t.heads) throw ValidationError("atoms CSV references heads beyond its declared count");
    layer.resize(t.heads, -1);
    return {t, layer};
}

inline Artifacts cmd_decompose(const TraceTensor& trace, const RunConfig& rc)
{
    const auto table = decompose_trace(trace, rc);
    return {{"atoms.csv", atoms_csv(table, trace.layer_of_head, rc)}};
}

// --- scores ----------------------------------------------------------------------

inline std::string scores_csv(const HeadScoreTable& s, const RunConfig& rc)
{
    report::Csv csv(rc, {"head_id", "layer", "head_index", "abstract", "memory", "diff", "rank"});
    csv.comment("units", units_name(rc.units));
    for (const auto& r : s.rows)
        csv.row({static_cast<long long>(r.head), static_cast<long long>(r.layer), static_cast<long long>(r.head_index),
                 to_units(r.abstract, rc.units), to_units(r.memory, rc.units), to_units(r.diff, rc.units),
                 static_cast<long long>(r.rank)});
    return csv.str();
}

inline nlohmann::json layer_profile_json(const HeadScoreTable& s, Units u)
{
    auto md = layer_mean_diff(s);
    for (double& v : md) v = to_units(v, u);
    nlohmann::json j;
    j["mean_diff"] = nlohmann::json::array();
    for (double v : md) j["mean_diff"].push_back(report::number(v));
    if (md.size() >= 3) {
        const auto p = fit_layer_profile(md);
        j["coeffs"] = {p.coeffs[0], p.coeffs[1], p.coeffs[2]};
        j["curvature_sign"] = p.curvature_sign;
        j["peak_layer"] = report::number(p.peak_layer);
    } else {
        j["coeffs"] = nullptr;
        j["curvature_sign"] = nullptr;
        j["peak_layer"] = nullptr;
    }
    return j;
}

inline std::string scores_svg(const HeadScoreTable& s, Units u)
{
    std::vector<report::ScatterPoint> pts;
    for (const auto& r : s.rows)
        pts.push_back({static_cast<double>(r.layer) + 0.8 * (static_cast<double>(r.head_index) + 0.5) /
                                                          static_cast<double>(std::max<std::size_t>(1, s.heads_per_layer)) - 0.4,
                       to_units(r.diff, u), r.diff > 0.0 ? 1u : 0u,
                       "head " + std::to_string(r.head) + " rank " + std::to_string(r.rank)});
    return report::svg_scatter(pts, "abstract - memory per head", "layer", std::string("diff (") + units_name(u) + ")");
}

inline Artifacts cmd_scores(const TraceTensor& trace, const RunConfig& rc)
{
    if (trace.steps < TraceTensor::kMinAnalysisSteps) {
        throw ValidationError("trace too short for scoring: " + std::to_string(trace.steps) + " steps");
    }
    const auto table = decompose_trace(trace, rc);
    const auto s = score_heads(table, trace.layer_of_head, trace.heads_per_layer);
    return {{"scores.csv", scores_csv(s, rc)},
            {"layer_profile.json", report::json_artifact(rc, {{"layer_profile", layer_profile_json(s, rc.units)}})},
            {"scores.svg", scores_svg(s, rc.units)}};
}

// --- graph -----------------------------------------------------------------------

inline GraphKind parse_graph_kind(const std::string& s)
{
    if (s == "abstract" || s == "syn") return GraphKind::kAbstract;
    if (s == "memory" || s == "red") return GraphKind::kMemory;
    if (s == "combined") return GraphKind::kCombined;
    throw ParseError("bad graph kind '" + s + "' (expected abstract, memory or combined)");
}

struct GraphSummary {
    HeadGraph graph;
    double efficiency = 0.0;
    double modularity = std::numeric_limits<double>::quiet_NaN();
    Partition partition;
    LayoutState layout;
};

inline GraphSummary analyze_graph(const PairAtomsTable& table, GraphKind kind, std::uint64_t seed)
{
    GraphSummary g;
    g.graph = build_graph(table, kind);
    g.efficiency = global_efficiency(g.graph);
    if (g.graph.twice_total_weight() > 0.0) {
        g.partition = detect_communities(g.graph, seed);
        g.modularity = modularity(g.graph, g.partition);
    } else {
        g.graph.warnings.push_back("graph has no positive edges; modularity undefined");
        g.partition = Partition::from_labels(std::vector<int>(g.graph.nodes(), 0));
        std::iota(g.partition.community.begin(), g.partition.community.end(), 0);
        g.partition.count = static_cast<int>(g.graph.nodes());
    }
    LayoutOptions lo;
    lo.seed = seed;
    g.layout = force_layout(g.graph, lo);
    return g;
}

inline std::string layout_svg(const GraphSummary& g, const std::vector<int>& layer, const std::string& title,
                              const std::vector<int>* color = nullptr)
{
    std::vector<report::ScatterPoint> pts;
    for (std::size_t i = 0; i < g.layout.positions.size(); ++i) {
        const auto c = color ? (*color)[i] : g.partition.community[i];
        pts.push_back({g.layout.positions[i].x, g.layout.positions[i].y, static_cast<std::size_t>(std::max(0, c)),
                       "head " + std::to_string(i) + " layer " + std::to_string(layer.at(i))});
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    const auto n = static_cast<Eigen::Index>(g.graph.nodes());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (g.graph.weight(i, j) > 0.0) edges.emplace_back(i, j);
    return report::svg_scatter(pts, title, "x", "y", edges);
}

inline nlohmann::json layout_nodes(const GraphSummary& g, const std::vector<int>& layer)
{
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < g.layout.positions.size(); ++i)
        nodes.push_back({{"id", i},
                         {"layer", layer.at(i)},
                         {"x", g.layout.positions[i].x},
                         {"y", g.layout.positions[i].y},
                         {"community", g.partition.community[i]}});
    return nodes;
}

inline Artifacts cmd_graph(const PairAtomsTable& table, const std::vector<int>& layer, GraphKind kind,
                           const RunConfig& rc)
{
    if (table.heads < 2) throw ValidationError("graph needs at least 2 heads");
    const auto g = analyze_graph(table, kind, rc.seed);
    nlohmann::json body;
    body["kind"] = graph_kind_name(kind);
    body["nodes"] = g.graph.nodes();
    body["global_efficiency"] = to_units(g.efficiency, rc.units);
    body["efficiency_units"] = std::string("1/") + units_name(rc.units);
    body["modularity"] = report::number(g.modularity);
    body["communities"] = g.partition.count;
    body["partition"] = g.partition.community;
    body["layout"] = {{"k", g.layout.k}, {"iterations", g.layout.iterations}, {"nodes", layout_nodes(g, layer)}};
    body["warnings"] = g.graph.warnings;
    return {{"graph.json", report::json_artifact(rc, body)},
            {"layout.svg", layout_svg(g, layer, std::string(graph_kind_name(kind)) + " head graph")}};
}

// --- compare -----------------------------------------------------------------------

inline nlohmann::json separation_json(const SeparationReport& r, Units u)
{
    nlohmann::json md = nlohmann::json::array();
    for (double v : r.layer_mean_diff) md.push_back(report::number(to_units(v, u)));
    return {{"silhouette", report::number(r.silhouette)}, {"q", r.q}, {"top", r.top}, {"bottom", r.bottom},
            {"layer_mean_diff", md}};
}

inline Artifacts cmd_compare(const TraceTensor& easy, const TraceTensor& hard, const RunConfig& rc)
{
    const double q = rc.params.value("q", 0.25);
    const auto te = decompose_trace(easy, rc), th = decompose_trace(hard, rc);
    const auto se = score_heads(te, easy.layer_of_head, easy.heads_per_layer);
    const auto sh = score_heads(th, hard.layer_of_head, hard.heads_per_layer);
    const auto ge = analyze_graph(te, GraphKind::kCombined, rc.seed);
    const auto gh = analyze_graph(th, GraphKind::kCombined, rc.seed);
    const auto cmp = separation_statistic(se, sh, ge.layout.positions, gh.layout.positions, q);
    nlohmann::json body{{"easy", separation_json(cmp.easy, rc.units)},
                        {"hard", separation_json(cmp.hard, rc.units)},
                        {"difference", report::number(cmp.difference)},
                        {"graph", "combined"}};
    auto groups = [](const SeparationReport& r, std::size_t n) {
        std::vector<int> c(n, 2);
        for (auto h : r.top) c[h] = 1;
        for (auto h : r.bottom) c[h] = 0;
        return c;
    };
    const auto ce = groups(cmp.easy, se.size()), ch = groups(cmp.hard, sh.size());
    return {{"separation.json", report::json_artifact(rc, body)},
            {"layout_easy.svg", layout_svg(ge, easy.layer_of_head, "easy: top (red) vs bottom (blue) heads", &ce)},
            {"layout_hard.svg", layout_svg(gh, hard.layer_of_head, "hard: top (red) vs bottom (blue) heads", &ch)}};
}

// --- toy -----------------------------------------------------------------------------

namespace toyc = phid::toy;

inline std::string curve_csv(const toyc::TrainResult& r, const RunConfig& rc)
{
    report::Csv csv(rc, {"step", "train_loss", "train_accuracy", "holdout_loss", "holdout_accuracy"});
    for (const auto& p : r.curve)
        csv.row({static_cast<long long>(p.step), p.train_loss, p.train_accuracy, p.holdout_loss, p.holdout_accuracy});
    return csv.str();
}

struct TrainOutput {
    toyc::TrainResult result;
    Artifacts artifacts;
};

inline TrainOutput cmd_toy_train(const toyc::ToyConfig& cfg, const RunConfig& rc)
{
    cfg.validate();
    const auto split = toyc::make_task(cfg.task, cfg.seed);
    TrainOutput out{toyc::train(cfg, split), {}};
    const auto& r = out.result;
    report::Series tr{"train acc", {}, {}}, ho{"holdout acc", {}, {}};
    for (const auto& p : r.curve) {
        tr.x.push_back(static_cast<double>(p.step));
        tr.y.push_back(p.train_accuracy);
        ho.x.push_back(static_cast<double>(p.step));
        ho.y.push_back(p.holdout_accuracy);
    }
    nlohmann::json summary{{"steps_run", r.steps_run},
                           {"train_accuracy", r.train.accuracy},
                           {"train_loss", r.train.loss},
                           {"holdout_accuracy", r.holdout.accuracy},
                           {"holdout_loss", r.holdout.loss},
                           {"reached_target", r.reached_target},
                           {"config", cfg}};
    out.artifacts = {{"model.ckpt", bytes_to_string(toyc::encode_checkpoint(r.model, rc.to_json()))},
                     {"curve.csv", curve_csv(r, rc)},
                     {"curve.svg", report::svg_lines({tr, ho}, "training curve", "step", "accuracy")},
                     {"train.json", report::json_artifact(rc, summary)}};
    return out;
}

/// Dataset named by `split` ("train" or "holdout"), truncated to `samples` rows.
inline toyc::Dataset toy_dataset(const toyc::ToyModel& m, const std::string& split, std::size_t samples)
{
    const auto s = toyc::make_task(m.config().task, m.config().seed);
    const toyc::Dataset* d = nullptr;
    if (split == "train") d = &s.train;
    else if (split == "holdout") d = &s.holdout;
    else throw ParseError("bad split '" + split + "' (expected train or holdout)");
    if (d->size() == 0) throw ValidationError("the " + split + " split is empty");
    return samples == 0 || samples >= d->size() ? *d : d->head(samples);
}

inline Artifacts cmd_toy_trace(const toyc::ToyModel& m, const toyc::Dataset& data, bool residual, const RunConfig& rc)
{
    auto cap = toyc::capture(m, data, {}, residual);
    cap.heads.run_config = {{"toy", m.config()}, {"run", rc.to_json()}};
    Artifacts out{{"heads.phid", bytes_to_string(encode_trace(cap.heads))}};
    if (!residual) return out;
    cap.residual.run_config = cap.heads.run_config;
    const auto cos = toyc::cosine_contributions(cap.residual);
    const auto en = toyc::energy_profile(cap.residual);
    report::Csv cc(rc, {"layer", "attention", "mlp", "layer_update", "skipped_terms"});
    report::Csv ec(rc, {"layer", "energy", "skipped_steps"});
    report::Series sa{"attention", {}, {}}, sm{"mlp", {}, {}}, sl{"layer", {}, {}}, se{"energy", {}, {}};
    for (std::size_t l = 0; l < cos.attention.size(); ++l) {
        cc.row({static_cast<long long>(l), cos.attention[l], cos.mlp[l], cos.layer[l],
                static_cast<long long>(cos.skipped_terms[l])});
        const double x = static_cast<double>(l);
        sa.x.push_back(x), sa.y.push_back(cos.attention[l]);
        sm.x.push_back(x), sm.y.push_back(cos.mlp[l]);
        sl.x.push_back(x), sl.y.push_back(cos.layer[l]);
    }
    for (std::size_t l = 0; l < en.energy.size(); ++l) {
        ec.row({static_cast<long long>(l), en.energy[l], static_cast<long long>(en.skipped_steps[l])});
        se.x.push_back(static_cast<double>(l)), se.y.push_back(en.energy[l]);
    }
    out.push_back({"residual.phid", bytes_to_string(encode_trace(cap.residual))});
    out.push_back({"cosine.csv", cc.str()});
    out.push_back({"cosine.svg", report::svg_lines({sa, sm, sl}, "mean cosine with the residual", "layer", "cosine")});
    out.push_back({"energy.csv", ec.str()});
    out.push_back({"energy.svg", report::svg_lines({se}, "energy per layer", "layer", "E")});
    out.push_back({"additivity.json",
                   report::json_artifact(rc, {{"max_additivity_error", cap.residual.max_additivity_error()}})});
    return out;
}

inline Artifacts cmd_toy_skip(const toyc::ToyModel& m, const toyc::Dataset& data, const RunConfig& rc)
{
    const std::size_t L = m.config().layers;
    report::Csv csv(rc, {"skipped_layer", "layer", "disturbance", "undefined_steps"});
    report::Csv mean(rc, {"skipped_layer", "mean_downstream"});
    report::Series s{"mean downstream disturbance", {}, {}};
    for (std::size_t k = 0; k < L; ++k) {
        const auto d = toyc::skip_disturbance(m, data, k);
        for (std::size_t l = k + 1; l < L; ++l)
            csv.row({static_cast<long long>(k), static_cast<long long>(l), d.disturbance[l],
                     static_cast<long long>(d.undefined_steps[l])});
        mean.row({static_cast<long long>(k), d.mean_downstream()});
        s.x.push_back(static_cast<double>(k));
        s.y.push_back(d.mean_downstream());
    }
    return {{"skip.csv", csv.str()},
            {"skip_mean.csv", mean.str()},
            {"skip.svg", report::svg_lines({s}, "relative disturbance after skipping a layer", "skipped layer", "D")}};
}

inline toyc::AblationOrder parse_order(const std::string& s)
{
    if (s == "abs_first") return toyc::AblationOrder::kAbstractFirst;
    if (s == "mem_first") return toyc::AblationOrder::kMemoryFirst;
    if (s == "random") return toyc::AblationOrder::kRandom;
    throw ParseError("bad ablation order '" + s + "'");
}

/// Scores heads from a capture of `probe`, then ablates on `eval` in all three
/// orders; the random order is repeated for `random_seeds` seeds.
inline Artifacts cmd_toy_ablate(const toyc::ToyModel& m, const toyc::Dataset& probe, const toyc::Dataset& eval,
                                const std::vector<std::size_t>& ks, std::size_t random_seeds, const RunConfig& rc)
{
    const auto cap = toyc::capture(m, probe);
    const auto table = decompose_trace(cap.heads, rc);
    const auto scores = score_heads(table, cap.heads.layer_of_head, cap.heads.heads_per_layer);
    report::Csv csv(rc, {"order", "seed", "k", "loss", "accuracy", "loss_ratio"});
    std::vector<report::Series> series;
    auto emit = [&](toyc::AblationOrder o, std::uint64_t seed, const std::string& label) {
        const auto pts = toyc::ablate_and_eval(m, scores, o, ks, eval, seed);
        report::Series s{label, {}, {}};
        for (const auto& p : pts) {
            csv.row({std::string(toyc::ablation_order_name(o)), static_cast<long long>(seed),
                     static_cast<long long>(p.k), p.loss, p.accuracy, p.loss_ratio});
            s.x.push_back(static_cast<double>(p.k));
            s.y.push_back(p.loss_ratio);
        }
        series.push_back(std::move(s));
    };
    emit(toyc::AblationOrder::kAbstractFirst, 0, "abs_first");
    emit(toyc::AblationOrder::kMemoryFirst, 0, "mem_first");
    for (std::size_t s = 0; s < random_seeds; ++s)
        emit(toyc::AblationOrder::kRandom, rc.seed + s, "random seed " + std::to_string(rc.seed + s));
    return {{"ablation.csv", csv.str()},
            {"ablation_scores.csv", scores_csv(scores, rc)},
            {"ablation.svg", report::svg_lines(series, "cumulative head ablation", "heads removed", "loss ratio")}};
}

inline Artifacts cmd_toy_ig(const toyc::ToyModel& m, const toyc::Dataset& data, std::size_t index, std::size_t steps,
                            const RunConfig& rc)
{
    if (index >= data.size()) throw ValidationError("sequence index beyond the dataset");
    const auto r = toyc::integrated_gradients(m, data.row(index), data.targets[index], steps);
    report::Csv csv(rc, {"position", "dim", "attribution"});
    for (Eigen::Index t = 0; t < r.attribution.rows(); ++t)
        for (Eigen::Index k = 0; k < r.attribution.cols(); ++k)
            csv.row({static_cast<long long>(t), static_cast<long long>(k), r.attribution(t, k)});
    const auto row = data.row(index);
    nlohmann::json body{{"index", index},
                        {"tokens", std::vector<int>(row.begin(), row.end())},
                        {"target", r.target},
                        {"steps", steps},
                        {"f_input", r.f_input},
                        {"f_baseline", r.f_baseline},
                        {"attribution_sum", r.attribution.sum()},
                        {"completeness_residual", report::number(r.completeness_residual())}};
    std::vector<report::ScatterPoint> pts;
    for (Eigen::Index t = 0; t < r.attribution.rows(); ++t)
        for (Eigen::Index k = 0; k < r.attribution.cols(); ++k)
            pts.push_back({static_cast<double>(k), r.attribution(t, k), static_cast<std::size_t>(t), {}});
    return {{"ig.csv", csv.str()},
            {"ig.json", report::json_artifact(rc, body)},
            {"ig.svg", report::svg_scatter(pts, "integrated gradients by embedding dimension", "dimension", "attribution")}};
}

} // namespace phid::pipeline
