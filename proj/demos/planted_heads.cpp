// Nine synthetic heads in three families: noisy copies of AR(1) source a,
// noisy copies of source b, and noisy readouts of a*b. Prints the head
// ranking and both head graphs; the memory graph splits into the families.
#include <cstdio>
#include <random>

#include "phid/pipeline.hpp"

int main(int argc, char** argv)
{
    using namespace phid;
    const std::size_t steps = argc > 1 ? std::stoul(argv[1]) : 4000;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;

    TraceTensor t;
    t.steps = steps;
    t.layers = 3;
    t.heads_per_layer = 3;
    t.layer_of_head = TraceTensor::default_layer_of_head(3, 3);
    t.values.resize(steps * t.heads());
    t.model_id = "planted";
    double a = 0.0, b = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
        a = 0.9 * a + n(rng);
        b = 0.9 * b + n(rng);
        for (std::size_t h = 0; h < t.heads(); ++h) {
            const double noise = 0.3 * n(rng);
            switch (h % 3) {
            case 0: t(s, h) = a + noise; break;
            case 1: t(s, h) = b + noise; break;
            default: t(s, h) = a * b + noise; break;
            }
        }
    }

    report::RunConfig rc;
    rc.subcommand = "demo";
    const auto table = pipeline::decompose_trace(t, rc);
    const auto scores = score_heads(table, t.layer_of_head, t.heads_per_layer);
    std::printf("rank head role      abstract   memory     diff\n");
    for (std::size_t id : scores.by_rank()) {
        const auto& r = scores.rows[id];
        const char* role = id % 3 == 0 ? "source a" : id % 3 == 1 ? "source b" : "a*b";
        std::printf("%4zu %4zu %-9s %9.4f %9.4f %9.4f\n", r.rank, id, role, r.abstract, r.memory, r.diff);
    }
    for (GraphKind k : {GraphKind::kAbstract, GraphKind::kMemory}) {
        const auto g = pipeline::analyze_graph(table, k, 0);
        std::printf("%-8s graph: E = %.4f, Q = %.4f, communities:", graph_kind_name(k), g.efficiency, g.modularity);
        for (int c : g.partition.community) std::printf(" %d", c);
        std::printf("\n");
    }
}
