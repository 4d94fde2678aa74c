#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>

#include "rcuguard/corpus.hpp"
#include "rcuguard/explorer.hpp"

using namespace rcuguard;

namespace {

struct Setup {
    CompiledProgram prog;
    HeapSeed seed;
};

Setup load(const char* file, const char* heap) {
    auto m = load_corpus(default_corpus_dir(), nullptr);
    auto r = parse_file(m->path_of(file));
    std::ifstream f(m->path_of(heap));
    std::stringstream ss;
    ss << f.rdbuf();
    return {compile(*r.program, 2), *parse_heap_seed(ss.str(), nullptr)};
}

void BM_ExploreBagRemove(benchmark::State& state) {
    auto s = load("bag_remove.rcu", "heaps/list3_first.heap");
    ExploreBounds b;
    long states = 0;
    for (auto _ : state) {
        auto rep = explore(s.prog, s.seed, b);
        states = rep.states_explored;
        benchmark::DoNotOptimize(rep);
    }
    state.counters["states"] = static_cast<double>(states);
}
BENCHMARK(BM_ExploreBagRemove)->Unit(benchmark::kMillisecond);

void BM_ExploreBstTwoChildren(benchmark::State& state) {
    auto s = load("bst_delete_two_children.rcu", "heaps/bst_two.heap");
    ExploreBounds b;
    for (auto _ : state) {
        auto rep = explore(s.prog, s.seed, b);
        benchmark::DoNotOptimize(rep);
    }
}
BENCHMARK(BM_ExploreBstTwoChildren)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
