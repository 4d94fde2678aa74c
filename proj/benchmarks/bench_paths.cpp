#include <benchmark/benchmark.h>

#include "rcuguard/paths.hpp"

using namespace rcuguard;

namespace {

Path p(const char* text) { return *parse_path(text); }

void BM_MayAliasSharedIndex(benchmark::State& state) {
    Path a = p("(Next)^k");
    Path b = p("(Next)^k.Next");
    for (auto _ : state) benchmark::DoNotOptimize(may_alias(a, b, 3));
}
BENCHMARK(BM_MayAliasSharedIndex);

void BM_MayAliasTwoVars(benchmark::State& state) {
    Path a = p("(l|r)^k.(l|r).r.(l)^m");
    Path b = p("(l|r)^k.(l|r).r.(l)^m.l.r");
    for (auto _ : state) benchmark::DoNotOptimize(may_alias(a, b, 3));
}
BENCHMARK(BM_MayAliasTwoVars);

void BM_Concretize(benchmark::State& state) {
    Path a = p("(l|r)^k.(l|r).(l|r)");
    std::map<std::string, unsigned> asg{{"k", 3}};
    for (auto _ : state) benchmark::DoNotOptimize(concretize(a, asg, 16));
}
BENCHMARK(BM_Concretize);

void BM_Reindex(benchmark::State& state) {
    Path a = p("(l|r)^k.(l|r).r.(l)^m.l");
    FieldSet fs{"l"};
    for (auto _ : state) benchmark::DoNotOptimize(reindex_path(a, "m", fs));
}
BENCHMARK(BM_Reindex);

}  // namespace

BENCHMARK_MAIN();
