#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "detox/attribution.hpp"
#include "detox/search.hpp"
#include "detox/text.hpp"
#include "detox/toy_backend.hpp"

namespace {

const detox::BackendSuite& steering() {
  static const auto suite = detox::toy::load_suite(DETOX_TOY_DATA_DIR);
  return suite;
}

std::vector<std::string> words(std::size_t n, std::size_t shift) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string((i * 7 + shift) % 13));
  return out;
}

void BM_WordLevenshtein(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = words(n, 0), b = words(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(detox::word_levenshtein(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_WordLevenshtein)->RangeMultiplier(4)->Range(8, 512)->Complexity();

void BM_Tokenize(benchmark::State& state) {
  const std::string text = "damn, shut up! this crap is stupid (and you know it) [MASK] ok.";
  for (auto _ : state) benchmark::DoNotOptimize(detox::tokenize(text));
}
BENCHMARK(BM_Tokenize);

void BM_KernelShapExact(benchmark::State& state) {
  auto tokens = words(static_cast<std::size_t>(state.range(0)) - 1, 1);
  tokens.push_back("stupid");
  const auto x = detox::TokenText::from_tokens(tokens);
  for (auto _ : state) {
    benchmark::DoNotOptimize(detox::kernel_shap(steering(), x, {0, 0, detox::ShapMode::kExact}));
  }
}
BENCHMARK(BM_KernelShapExact)->DenseRange(4, 12, 4)->Unit(benchmark::kMillisecond);

void BM_KernelShapSampled(benchmark::State& state) {
  auto tokens = words(23, 2);
  tokens.push_back("idiot");
  const auto x = detox::TokenText::from_tokens(tokens);
  const auto samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(detox::kernel_shap(steering(), x, {samples, 1, detox::ShapMode::kSampled}));
  }
}
BENCHMARK(BM_KernelShapSampled)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_GenerateCf(benchmark::State& state) {
  const auto x = detox::tokenize("damn, shut up, this crap is stupid and you are an idiot");
  const auto importance = detox::kernel_shap(steering(), x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(detox::generate_cf(steering(), x, importance, detox::SearchConfig{}));
  }
}
BENCHMARK(BM_GenerateCf)->Unit(benchmark::kMillisecond);

void BM_Refine(benchmark::State& state) {
  const auto x = detox::tokenize("you are a stupid idiot");
  const auto raw = detox::generate_cf(steering(), x, detox::kernel_shap(steering(), x), {});
  for (auto _ : state) benchmark::DoNotOptimize(detox::refine(steering(), x, raw, {}));
}
BENCHMARK(BM_Refine)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
