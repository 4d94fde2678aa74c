#include <benchmark/benchmark.h>

#include "rcuguard/checker.hpp"
#include "rcuguard/corpus.hpp"

using namespace rcuguard;

namespace {

Program load(const char* file) {
    auto m = load_corpus(default_corpus_dir(), nullptr);
    auto r = parse_file(m->path_of(file));
    return *r.program;
}

void BM_CheckBagRemove(benchmark::State& state) {
    auto p = load("bag_remove.rcu");
    for (auto _ : state) benchmark::DoNotOptimize(check_program(p));
}
BENCHMARK(BM_CheckBagRemove);

void BM_CheckBstDelete(benchmark::State& state) {
    auto p = load("bst_delete_two_children.rcu");
    for (auto _ : state) benchmark::DoNotOptimize(check_program(p));
}
BENCHMARK(BM_CheckBstDelete);

}  // namespace

BENCHMARK_MAIN();
