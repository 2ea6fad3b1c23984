#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/evaluation.hpp"
#include "support/toy_fixtures.hpp"

namespace detox {
namespace {

// Backends that return fixed values keyed by raw text.
class TableClassifier final : public ToxicityClassifier {
 public:
  explicit TableClassifier(std::map<std::string, double> p) : p_(std::move(p)) {}
  std::vector<ToxicityScore> classify(std::span<const TokenText> texts) const override {
    std::vector<ToxicityScore> out;
    for (const auto& t : texts) out.push_back({p_.at(t.raw()), 1.0 - p_.at(t.raw())});
    return out;
  }

 private:
  std::map<std::string, double> p_;
};

class TableEmbedder final : public SentenceEmbedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> v) : v_(std::move(v)) {}
  std::vector<std::vector<double>> embed(std::span<const TokenText> texts) const override {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(v_.at(t.raw()));
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> v_;
};

class TablePerplexity final : public PerplexityScorer {
 public:
  explicit TablePerplexity(std::map<std::string, double> p) : p_(std::move(p)) {}
  std::vector<double> perplexity(std::span<const TokenText> texts) const override {
    std::vector<double> out;
    for (const auto& t : texts) out.push_back(p_.at(t.raw()));
    return out;
  }

 private:
  std::map<std::string, double> p_;
};

class NoInfill final : public MaskInfiller {
 public:
  std::vector<InfillCandidate> fill_mask(const TokenText&, std::size_t, std::size_t) const override {
    return {};
  }
};

BackendSuite table_suite(std::map<std::string, double> p_toxic,
                         std::map<std::string, std::vector<double>> vectors,
                         std::map<std::string, double> ppl) {
  BackendSuite s;
  s.name = "table";
  s.classifier = std::make_shared<TableClassifier>(std::move(p_toxic));
  s.infiller = std::make_shared<NoInfill>();
  s.embedder = std::make_shared<TableEmbedder>(std::move(vectors));
  s.perplexity = std::make_shared<TablePerplexity>(std::move(ppl));
  return s;
}

std::vector<TokenText> shipped_texts() {
  std::vector<TokenText> out;
  std::ifstream in(testing::toy_data_dir() / "corpus.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    out.push_back(tokenize(nlohmann::json::parse(line).at("text").get<std::string>()));
  }
  return out;
}

TEST(Evaluate, SingleItemExample) {
  const double s = 0.95;
  const auto oracle = table_suite({{"a b c", 0.9}, {"a x c", 0.2}},
                                  {{"a b c", {1.0, 0.0}}, {"a x c", {s, std::sqrt(1 - s * s)}}},
                                  {{"a b c", 10.0}, {"a x c", 11.0}});
  const EvalItem item{"1", tokenize("a b c"), tokenize("a x c"), false};
  const auto r = evaluate(oracle, {&item, 1});
  EXPECT_DOUBLE_EQ(r.acc_percent, 100.0);
  EXPECT_NEAR(r.mean_toxicity_score, 0.2, 1e-12);
  EXPECT_NEAR(r.content_preservation_percent, 95.0, 1e-9);
  EXPECT_NEAR(r.delta_ppl_median, 1.1, 1e-12);
  EXPECT_NEAR(r.sparsity_percent, 100.0 * 2.0 / 3.0, 1e-9);
  ASSERT_EQ(r.per_item.size(), 1u);
  EXPECT_EQ(r.per_item[0].edit_distance, 1u);
  EXPECT_EQ(r.per_item[0].edits, (EditSet{{1, "b", "x"}}));
  EXPECT_EQ(r.n_inputs, 1u);
  EXPECT_EQ(r.n_success, 1u);
}

TEST(Evaluate, IdentityCorpus) {
  const auto oracle = testing::shipped_oracle();
  std::vector<EvalItem> items;
  double toxic = 0.0;
  for (const auto& t : shipped_texts()) {
    items.push_back({std::to_string(items.size()), t, t, false});
    if (classify(oracle, t).is_toxic()) toxic += 1.0;
  }
  const auto r = evaluate(oracle, items);
  EXPECT_NEAR(r.sparsity_percent, 100.0, 1e-9);
  EXPECT_NEAR(r.content_preservation_percent, 100.0, 1e-9);
  EXPECT_NEAR(r.delta_ppl_median, 1.0, 1e-12);
  EXPECT_NEAR(r.acc_percent, 100.0 * (1.0 - toxic / static_cast<double>(items.size())), 1e-9);
}

TEST(Evaluate, FailedItemsScoreTheOriginal) {
  const auto oracle = testing::shipped_oracle();
  const EvalItem items[] = {{"1", tokenize("you are a stupid idiot"), tokenize("you are a nice person"), true},
                            {"2", tokenize("i hate cats"), tokenize("i like cats"), false}};
  const auto r = evaluate(oracle, items);
  EXPECT_EQ(r.n_failed, 1u);
  EXPECT_EQ(r.n_success, 1u);
  EXPECT_NEAR(r.per_item[0].metrics.sparsity_percent, 100.0, 1e-12);
  EXPECT_NEAR(r.per_item[0].metrics.p_toxic, classify(oracle, items[0].original).p_toxic, 1e-12);
  EXPECT_TRUE(r.per_item[0].failed);
}

TEST(Evaluate, MedianResistsOutliers) {
  EXPECT_DOUBLE_EQ(median({1.0, 1.0, 1.0, 1.0, 100.0}), 1.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_DOUBLE_EQ(median({7.0}), 7.0);
  EXPECT_THROW(median({}), EmptyCorpus);

  std::map<std::string, double> p, ppl;
  std::map<std::string, std::vector<double>> v;
  std::vector<EvalItem> items;
  for (int i = 0; i < 5; ++i) {
    const std::string a = "a" + std::to_string(i), b = "b" + std::to_string(i);
    p[a] = p[b] = 0.1;
    v[a] = v[b] = {1.0, 0.0};
    ppl[a] = 10.0;
    ppl[b] = i == 4 ? 1000.0 : 10.0;
    items.push_back({std::to_string(i), tokenize(a), tokenize(b), false});
  }
  EXPECT_DOUBLE_EQ(evaluate(table_suite(p, v, ppl), items).delta_ppl_median, 1.0);
}

TEST(Evaluate, PermutationInvariantAndBounded) {
  const auto oracle = testing::shipped_oracle();
  const auto steering = testing::shipped_steering();
  std::vector<EvalItem> items;
  for (const auto& t : shipped_texts()) {
    // A crude rewrite: drop the last token's content by replacing it.
    items.push_back({std::to_string(items.size()), t, t.with_token(t.size() - 1, "thing"), false});
  }
  const auto base = evaluate(oracle, items, &steering);
  std::mt19937 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(items.begin(), items.end(), rng);
    const auto r = evaluate(oracle, items, &steering);
    EXPECT_NEAR(r.acc_percent, base.acc_percent, 1e-9);
    EXPECT_NEAR(r.mean_toxicity_score, base.mean_toxicity_score, 1e-9);
    EXPECT_NEAR(r.sparsity_percent, base.sparsity_percent, 1e-9);
    EXPECT_NEAR(r.content_preservation_percent, base.content_preservation_percent, 1e-9);
    EXPECT_DOUBLE_EQ(r.delta_ppl_median, base.delta_ppl_median);
  }
  for (const double pct : {base.acc_percent, base.sparsity_percent, base.content_preservation_percent}) {
    EXPECT_GE(pct, 0.0);
    EXPECT_LE(pct, 100.0);
  }
  EXPECT_GE(base.mean_toxicity_score, 0.0);
  EXPECT_LE(base.mean_toxicity_score, 1.0);
  EXPECT_GT(base.delta_ppl_median, 0.0);
  EXPECT_TRUE(base.warnings.empty());
}

TEST(Evaluate, WarnsWhenOracleIsSteering) {
  const auto oracle = testing::shipped_oracle();
  const EvalItem item{"1", tokenize("i hate cats"), tokenize("i like cats"), false};
  const auto r = evaluate(oracle, {&item, 1}, &oracle);
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Evaluate, EmptyCorpus) {
  EXPECT_THROW(evaluate(testing::shipped_oracle(), std::span<const EvalItem>{}), EmptyCorpus);
}

TEST(Report, JsonAndTable) {
  const auto oracle = testing::shipped_oracle();
  const EvalItem item{"7", tokenize("i hate cats"), tokenize("i like cats"), false};
  const auto r = evaluate(oracle, {&item, 1});
  const auto j = nlohmann::json::parse(report_to_json(r));
  for (const char* key : {"acc_percent", "mean_toxicity_score", "sparsity_percent",
                          "content_preservation_percent", "delta_ppl_median", "n_inputs", "n_success",
                          "n_failed", "n_skipped", "per_item", "warnings"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["per_item"][0]["id"], "7");
  EXPECT_EQ(j["per_item"][0]["edits"][0]["replacement"], "like");

  const auto table = report_to_table(r, "run");
  for (const char* row : {"dPPL", "%CP", "%S", "%ACC", "SCORE", "n_inputs=1"}) {
    EXPECT_NE(table.find(row), std::string::npos) << row;
  }
  EXPECT_LT(table.find("dPPL"), table.find("SCORE"));
}

}  // namespace
}  // namespace detox
