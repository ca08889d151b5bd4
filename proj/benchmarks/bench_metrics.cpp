#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "intentkit/agents.hpp"
#include "intentkit/extrinsic.hpp"
#include "intentkit/preprocess.hpp"
#include "intentkit/rng.hpp"
#include "intentkit/structured.hpp"
#include "intentkit/synth_eval.hpp"
#include "intentkit/topic_eval.hpp"

using namespace intentkit;

namespace {

// Zipf-ish vocabulary so the coherence counts look like real queries.
std::vector<std::string> corpus(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string line;
        for (std::size_t w = 4 + rng.uniform(8); w > 0; --w) {
            const auto r = rng.uniform01();
            line += (line.empty() ? "" : " ") + std::string("word") + std::to_string(static_cast<int>(400 * r * r * r));
        }
        out.push_back(line);
    }
    return out;
}

void BM_WindowStats(benchmark::State& state) {
    const auto lines = corpus(static_cast<std::size_t>(state.range(0)), 1);
    std::vector<std::vector<std::string>> docs;
    for (const auto& l : lines) docs.push_back(whitespace_tokens(l));
    for (auto _ : state) benchmark::DoNotOptimize(WindowStats::build(docs, 10));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WindowStats)->Arg(1000)->Arg(10000);

void BM_CoherenceTop10(benchmark::State& state) {
    const auto lines = corpus(10000, 2);
    std::vector<std::vector<std::string>> docs;
    for (const auto& l : lines) docs.push_back(whitespace_tokens(l));
    const auto stats = WindowStats::build(docs, 10);
    const auto topic = TopicDocs::build("t", {lines.begin(), lines.begin() + 200}, {nullptr, 1, false});
    for (auto _ : state) {
        benchmark::DoNotOptimize(topic_npmi(topic, stats, 10));
        benchmark::DoNotOptimize(c_v(topic, stats, 10));
    }
}
BENCHMARK(BM_CoherenceTop10);

void BM_IntrinsicMetrics(benchmark::State& state) {
    const auto lines = corpus(static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(distinct_n(lines, 4));
        benchmark::DoNotOptimize(compression_ratio(lines));
        benchmark::DoNotOptimize(qms(lines));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IntrinsicMetrics)->Arg(100)->Arg(2000);

void BM_CrPos(benchmark::State& state) {
    const std::vector<std::string> lines(400, "i would like to check the balance of my savings account today");
    for (auto _ : state) benchmark::DoNotOptimize(cr_pos(lines));
}
BENCHMARK(BM_CrPos);

void BM_ParseMergerResponse(benchmark::State& state) {
    const std::string text =
        "Sure, here is the analysis.\n```yaml\nReasoning_across_topics: same\nPair: (Accounts.Check Balance, "
        "Accounts.Account Balance)\nKeep: Accounts.Check Balance\nKeep Examples:\n- what is my balance\n- show my "
        "balance\nEliminate: Accounts.Account Balance\nEliminate Examples:\n- balance in checking\nValid: True\n```\n";
    for (auto _ : state) benchmark::DoNotOptimize(parse_structured(text, merger_schema()));
}
BENCHMARK(BM_ParseMergerResponse);

void BM_ClassifierTrain(benchmark::State& state) {
    const auto lines = corpus(static_cast<std::size_t>(state.range(0)), 4);
    LabeledSet rows;
    for (std::size_t i = 0; i < lines.size(); ++i) rows.push_back({lines[i] + " tag" + std::to_string(i % 10), "l" + std::to_string(i % 10)});
    for (auto _ : state) benchmark::DoNotOptimize(Classifier::train(rows));
}
BENCHMARK(BM_ClassifierTrain)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
