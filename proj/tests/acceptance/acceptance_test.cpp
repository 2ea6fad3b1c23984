// End-to-end acceptance checks on the toy backends. Prints one PASS/FAIL
// line per criterion and exits non-zero if any fails.
//
//   acceptance_test <path-to-detox-binary>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detox/attribution.hpp"
#include "detox/corpus_io.hpp"
#include "detox/errors.hpp"
#include "detox/evaluation.hpp"
#include "detox/pipeline.hpp"
#include "detox/search.hpp"
#include "detox/toy_backend.hpp"
#include "support/toy_fixtures.hpp"

namespace {

namespace fs = std::filesystem;
using namespace detox;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "detox_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path corpus_path() { return testing::toy_data_dir() / "corpus.jsonl"; }

std::vector<TokenText> corpus_texts() {
  std::vector<TokenText> out;
  for (const auto& rec : read_corpus(corpus_path(), "", "text", "id")) out.push_back(tokenize(rec.text));
  return out;
}

// Shapley values as the average marginal contribution over all d!
// orderings of the players.
std::vector<double> permutation_shapley(const BackendSuite& suite, const TokenText& x) {
  const std::size_t d = x.size();
  std::map<std::vector<bool>, double> cache;
  auto value = [&](const std::vector<bool>& present) {
    auto it = cache.find(present);
    if (it != cache.end()) return it->second;
    auto tokens = x.tokens();
    for (std::size_t i = 0; i < d; ++i) {
      if (!present[i]) tokens[i] = suite.mask_token;
    }
    const double v = classify(suite, TokenText::from_tokens(tokens)).p_toxic;
    cache.emplace(present, v);
    return v;
  };
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(d, 0.0);
  double n_orders = 0.0;
  do {
    std::vector<bool> present(d, false);
    double prev = value(present);
    for (const auto i : order) {
      present[i] = true;
      const double cur = value(present);
      phi[i] += cur - prev;
      prev = cur;
    }
    n_orders += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= n_orders;
  return phi;
}

Outcome criterion1() {
  Outcome o;
  const auto start = Clock::now();
  const auto suite = testing::shipped_steering();
  double exact_err = 0.0, sampled_err = 0.0;
  std::size_t n = 0;
  for (const auto& x : corpus_texts()) {
    if (x.size() > 8) continue;
    ++n;
    const auto oracle = permutation_shapley(suite, x);
    const auto exact = kernel_shap(suite, x, {0, 0, ShapMode::kExact});
    const auto sampled = kernel_shap(suite, x, {2048, 42, ShapMode::kSampled});
    for (std::size_t i = 0; i < x.size(); ++i) {
      exact_err = std::max(exact_err, std::abs(exact.scores[i] - oracle[i]));
      sampled_err = std::max(sampled_err, std::abs(sampled.scores[i] - oracle[i]));
    }
  }
  const double elapsed = seconds_since(start);
  o.detail << n << " texts with d<=8; exact max err " << exact_err << ", sampled max err " << sampled_err
           << ", " << elapsed << " s";
  o.check(n > 0, "no texts");
  o.check(exact_err <= 1e-9, "exact within 1e-9");
  o.check(sampled_err <= 0.05, "sampled within 0.05");
  o.check(elapsed < 5.0, "runtime < 5 s");
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto suite = testing::shipped_steering();
  double worst = 0.0;
  bool zero_exact = true;
  for (const auto& x : corpus_texts()) {
    const double gap = classify(suite, x).toxic_logit() -
                       classify(suite, fully_masked(suite, x)).toxic_logit();
    for (const std::size_t steps : {1U, 8U, 32U}) {
      const auto ig = integrated_gradients(suite, x, steps);
      worst = std::max(worst, std::abs(std::accumulate(ig.scores.begin(), ig.scores.end(), 0.0) - gap));
      for (const double v : integrated_gradients(suite, x, steps, BaselineSpec::instance(x)).scores) {
        if (v != 0.0) zero_exact = false;
      }
    }
  }
  o.detail << "max completeness gap " << worst << "; baseline=x zero vector " << (zero_exact ? "yes" : "no");
  o.check(worst <= 1e-6, "completeness within 1e-6");
  o.check(zero_exact, "baseline=x gives exact zeros");
  return o;
}

Outcome criterion3(const pipeline::RunOutcome& run) {
  Outcome o;
  const auto steering = testing::shipped_steering();
  std::size_t returned = 0, valid = 0, failed = 0;
  for (const auto& item : run.items) {
    if (item.status == pipeline::ItemStatus::kFailed) ++failed;
    if (item.status != pipeline::ItemStatus::kOk) continue;
    ++returned;
    if (classify(steering, tokenize(item.detoxified)).p_nontoxic > 0.5) ++valid;
  }
  o.detail << valid << "/" << returned << " counterfactuals flip the steering classifier ("
           << run.items.size() << " texts, " << failed << " without counterfactual)";
  o.check(run.items.size() == 50, "50-text corpus");
  o.check(returned > 0 && valid == returned, "every returned counterfactual flips");
  return o;
}

// Random instances whose exhaustive <=2-edit neighbourhood contains a flip.
struct SearchInstance {
  BackendSuite suite;
  TokenText text;
};

bool has_flip_within_two(const BackendSuite& suite, const TokenText& x, std::size_t top_k) {
  const std::size_t d = x.size();
  std::vector<std::vector<std::string>> pools(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (const auto& c : fill_mask(suite, x, i, top_k)) {
      if (c.token != x[i]) pools[i].push_back(c.token);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (const auto& a : pools[i]) {
      const auto one = x.with_token(i, a);
      if (!classify(suite, one).is_toxic()) return true;
      for (std::size_t j = i + 1; j < d; ++j) {
        for (const auto& b : pools[j]) {
          if (!classify(suite, one.with_token(j, b)).is_toxic()) return true;
        }
      }
    }
  }
  return false;
}

std::vector<SearchInstance> search_instances(std::size_t count) {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> strong(1.0, 3.0), mild(-0.5, 0.8);
  std::vector<SearchInstance> out;
  while (out.size() < count) {
    const std::size_t d = 4 + rng() % 5;
    testing::ToySpec spec;
    spec.lexicon.clear();
    spec.table.clear();
    spec.fallback = {{"thing", 0.1}};
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < d; ++i) {
      const std::string t = "t" + std::to_string(out.size()) + "_" + std::to_string(i);
      tokens.push_back(t);
      spec.lexicon[t] = (rng() % 3 == 0) ? strong(rng) : mild(rng);
      std::vector<InfillCandidate> cands;
      const std::size_t n_cands = 1 + rng() % 3;
      for (std::size_t k = 0; k < n_cands; ++k) {
        const std::string c = t + "r" + std::to_string(k);
        spec.lexicon[c] = mild(rng) - 0.5;
        cands.push_back({c, 0.9 - 0.1 * static_cast<double>(k)});
      }
      spec.table[t] = cands;
    }
    spec.bias = -1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto suite = testing::make_toy(spec);
    const auto x = TokenText::from_tokens(tokens);
    if (!classify(suite, x).is_toxic()) continue;
    if (!has_flip_within_two(suite, x, SearchConfig{}.top_k_candidates)) continue;
    out.push_back({std::move(suite), x});
  }
  return out;
}

Outcome criterion4() {
  Outcome o;
  const auto instances = search_instances(20);
  const auto start = Clock::now();
  std::size_t found = 0;
  for (const auto& inst : instances) {
    try {
      const auto r = generate_cf(inst.suite, inst.text, kernel_shap(inst.suite, inst.text), SearchConfig{});
      if (r.p_nontoxic > 0.5) ++found;
    } catch (const NoCounterfactualFound&) {
    }
  }
  const double elapsed = seconds_since(start);
  o.detail << found << "/" << instances.size() << " instances flipped, " << elapsed << " s";
  o.check(found == instances.size(), "flip found in every instance");
  o.check(elapsed < 10.0, "runtime < 10 s");
  return o;
}

// Each fixture text holds one mild and one strong lexicon word; targeting
// ranks the mild word first so the raw counterfactual edits both.
struct RefineFixture {
  BackendSuite suite;
  TokenText text;
  ImportanceVector importance;
  std::size_t redundant_position;
};

std::vector<RefineFixture> refine_fixtures() {
  const std::vector<std::pair<std::string, std::string>> pairs{
      {"damn", "stupid"}, {"crap", "idiot"}, {"hell", "moron"}, {"silly", "loser"}, {"shut", "scum"},
      {"damn", "pathetic"}, {"crap", "trash"}, {"hell", "jerk"}, {"silly", "idiots"}, {"shut", "garbage"}};
  const std::vector<std::string> frames{"{m} you are so {s}", "that {m} guy is {s}",
                                        "{m} , this is {s} work", "why so {m} and {s}"};
  std::vector<RefineFixture> out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [m, s] = pairs[k];
    testing::ToySpec spec;
    spec.lexicon = {{m, 0.5}, {s, 2.5}};
    spec.table = {{m, {{"gosh", 0.8}}}, {s, {{"odd", 0.7}}}};
    spec.fallback.clear();
    std::string frame = frames[k % frames.size()];
    frame.replace(frame.find("{m}"), 3, m);
    frame.replace(frame.find("{s}"), 3, s);
    const auto x = tokenize(frame);
    ImportanceVector imp;
    imp.scores.assign(x.size(), 0.0);
    std::size_t mild_pos = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == m) {
        imp.scores[i] = 1.0;
        mild_pos = i;
      }
      if (x[i] == s) imp.scores[i] = 0.5;
    }
    out.push_back({testing::make_toy(spec), x, imp, mild_pos});
  }
  return out;
}

Outcome criterion5() {
  Outcome o;
  std::size_t reverted = 0, eligible = 0, invariant_violations = 0, items = 0;
  double uplift = 0.0;
  for (const auto& f : refine_fixtures()) {
    const auto raw = generate_cf(f.suite, f.text, f.importance, SearchConfig{});
    if (raw.edits.size() != 2) continue;
    ++eligible;
    const auto r = refine(f.suite, f.text, raw, SearchConfig{});
    if (r.edits.size() == 1 && r.counterfactual[f.redundant_position] == f.text[f.redundant_position]) {
      ++reverted;
    }
    if (r.edits.size() > raw.edits.size()) ++invariant_violations;
    uplift += sparsity_percent(f.text, r.counterfactual) - sparsity_percent(f.text, raw.counterfactual);
    ++items;
  }
  const auto fixture_items = items;
  const auto steering = testing::shipped_steering();
  std::size_t corpus_refined = 0;
  for (const auto& x : corpus_texts()) {
    if (!classify(steering, x).is_toxic()) continue;
    try {
      const auto raw = generate_cf(steering, x, kernel_shap(steering, x), SearchConfig{});
      const auto r = refine(steering, x, raw, SearchConfig{});
      if (r.edits.size() > raw.edits.size()) ++invariant_violations;
      if (r.refined) ++corpus_refined;
      uplift += sparsity_percent(x, r.counterfactual) - sparsity_percent(x, raw.counterfactual);
      ++items;
    } catch (const NoCounterfactualFound&) {
    }
  }
  const double mean_uplift = items == 0 ? 0.0 : uplift / static_cast<double>(items);
  o.detail << "redundant edit reverted in " << reverted << "/" << eligible << " fixtures; "
           << invariant_violations << " edit-count violations over " << items << " items ("
           << corpus_refined << " corpus items refined); mean %S uplift " << mean_uplift;
  o.check(eligible == fixture_items && eligible == 10, "every fixture yields a 2-edit raw counterfactual");
  o.check(reverted == eligible, "redundant edit reverted everywhere");
  o.check(invariant_violations == 0, "refined edits <= raw edits");
  o.check(mean_uplift > 0.0, "mean sparsity uplift > 0");
  return o;
}

Outcome criterion6() {
  Outcome o;
  const auto oracle = testing::shipped_oracle();
  std::vector<EvalItem> identity;
  for (const auto& x : corpus_texts()) identity.push_back({std::to_string(identity.size()), x, x, false});
  const auto r = evaluate(oracle, identity);
  bool per_item = true;
  for (const auto& rec : r.per_item) {
    per_item = per_item && rec.metrics.sparsity_percent == 100.0 &&
               std::abs(rec.metrics.content_preservation_percent - 100.0) <= 1e-9;
  }
  const bool median_ok = median({1.0, 1.0, 1.0, 1.0, 1000.0}) == 1.0 && median({1.0, 2.0, 3.0, 100.0}) == 2.5;
  o.detail << "%S " << r.sparsity_percent << ", %CP " << r.content_preservation_percent << ", dPPL "
           << r.delta_ppl_median << ", median outlier check " << (median_ok ? "ok" : "broken");
  o.check(per_item && r.sparsity_percent == 100.0, "%S(x,x) = 100");
  o.check(std::abs(r.content_preservation_percent - 100.0) <= 1e-9, "%CP(x,x) = 100");
  o.check(r.delta_ppl_median == 1.0, "identity dPPL = 1.0 exactly");
  o.check(median_ok, "median ignores outliers");
  return o;
}

int run_cli(const std::string& binary, const std::string& args) {
  const std::string cmd = "\"" + binary + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> detoxified_by_id(const fs::path& results) {
  std::map<std::string, std::string> out;
  std::istringstream in(slurp(results));
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    out[j.at("id").get<std::string>()] = j.at("detoxified").get<std::string>();
  }
  return out;
}

Outcome criterion7(const std::string& binary) {
  Outcome o;
  const auto dir = scratch("c7");
  const std::string common = " --input \"" + corpus_path().string() + "\" --seed 13 ";
  const int a = run_cli(binary, "run" + common + "--out \"" + (dir / "a").string() + "\"");
  const int b = run_cli(binary, "run" + common + "--out \"" + (dir / "b").string() + "\"");

  std::vector<std::string> lines;
  {
    std::istringstream in(slurp(corpus_path()));
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }
  std::mt19937 rng(5);
  std::shuffle(lines.begin(), lines.end(), rng);
  {
    std::ofstream out(dir / "shuffled.jsonl");
    for (const auto& l : lines) out << l << '\n';
  }
  const int c = run_cli(binary, "run --input \"" + (dir / "shuffled.jsonl").string() +
                                    "\" --seed 13 --out \"" + (dir / "c").string() + "\"");
  const auto ra = slurp(dir / "a" / "results.jsonl");
  const auto rb = slurp(dir / "b" / "results.jsonl");
  const bool identical = !ra.empty() && ra == rb;
  const auto ida = detoxified_by_id(dir / "a" / "results.jsonl");
  const auto idc = detoxified_by_id(dir / "c" / "results.jsonl");
  const bool shuffle_ok = !ida.empty() && ida == idc;
  o.detail << "exit codes " << a << "/" << b << "/" << c << "; results.jsonl "
           << (identical ? "byte-identical" : "differs") << " (" << ra.size() << " bytes); shuffled input "
           << (shuffle_ok ? "same per-id outputs" : "differs");
  o.check(a <= 1 && b <= 1 && c <= 1, "runs complete");
  o.check(identical, "byte-identical reruns");
  o.check(shuffle_ok, "shuffle invariance");
  return o;
}

// Drops every token with a positive steering-lexicon weight.
EvaluationReport delete_lexicon_baseline(const pipeline::RunOutcome& engine) {
  const auto weights = toy::load_weights(testing::toy_data_dir() / "lexicon.tsv");
  const auto oracle = testing::shipped_oracle();
  std::vector<EvalItem> items;
  for (const auto& item : engine.items) {
    if (item.status == pipeline::ItemStatus::kSkipped) continue;
    const auto x = tokenize(item.original);
    std::vector<std::string> kept;
    for (const auto& t : x.tokens()) {
      const auto it = weights.find(t);
      if (it == weights.end() || it->second <= 0.0) kept.push_back(t);
    }
    if (kept.empty()) {
      items.push_back({item.id, x, x, true});
    } else {
      items.push_back({item.id, x, TokenText::from_tokens(kept), false});
    }
  }
  return evaluate(oracle, items);
}

Outcome criterion8(const pipeline::RunOutcome& engine) {
  Outcome o;
  const auto base = delete_lexicon_baseline(engine);
  const auto& e = engine.report;
  o.detail << "engine %CP " << e.content_preservation_percent << " %S " << e.sparsity_percent << " %ACC "
           << e.acc_percent << " vs delete-lexicon %CP " << base.content_preservation_percent << " %S "
           << base.sparsity_percent << " %ACC " << base.acc_percent
           << " (published full-scale figures need the original models and data; not reproduced)";
  o.check(e.content_preservation_percent > base.content_preservation_percent, "%CP above baseline");
  o.check(e.sparsity_percent > base.sparsity_percent, "%S above baseline");
  o.check(e.acc_percent >= base.acc_percent - 10.0, "%ACC within 10 points of baseline or better");
  return o;
}

pipeline::RunOutcome run_engine(pipeline::LfiMethod lfi, const std::string& name) {
  pipeline::PipelineConfig c;
  c.input = corpus_path();
  c.out = scratch(name);
  c.seed = 13;
  c.lfi = lfi;
  return pipeline::run(c);
}

Outcome criterion9(const std::map<std::string, pipeline::RunOutcome>& runs) {
  Outcome o;
  double lo = 1e9, hi = -1e9;
  for (const auto& [name, run] : runs) {
    o.detail << name << " %ACC " << run.report.acc_percent << " (exit " << run.exit_code << "); ";
    o.check(run.report.n_inputs > 0, name + " completes");
    lo = std::min(lo, run.report.acc_percent);
    hi = std::max(hi, run.report.acc_percent);
  }
  o.detail << "spread " << hi - lo << " points";
  o.check(hi - lo <= 10.0, "%ACC spread <= 10 points");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance_test <detox-binary>\n";
    return 2;
  }
  const std::string binary = argv[1];

  std::vector<std::pair<int, std::function<Outcome()>>> criteria;
  std::map<std::string, pipeline::RunOutcome> runs;
  auto engine = [&](const std::string& name) -> const pipeline::RunOutcome& {
    if (!runs.count(name)) {
      const auto lfi = name == "kshap" ? pipeline::LfiMethod::kKernelShap
                       : name == "ig"  ? pipeline::LfiMethod::kIntegratedGradients
                                       : pipeline::LfiMethod::kAttention;
      runs.emplace(name, run_engine(lfi, "engine_" + name));
    }
    return runs.at(name);
  };

  criteria.emplace_back(1, criterion1);
  criteria.emplace_back(2, criterion2);
  criteria.emplace_back(3, [&] { return criterion3(engine("kshap")); });
  criteria.emplace_back(4, criterion4);
  criteria.emplace_back(5, criterion5);
  criteria.emplace_back(6, criterion6);
  criteria.emplace_back(7, [&] { return criterion7(binary); });
  criteria.emplace_back(8, [&] { return criterion8(engine("kshap")); });
  criteria.emplace_back(9, [&] {
    engine("kshap");
    engine("ig");
    engine("attention");
    return criterion9(runs);
  });

  int failures = 0;
  for (auto& [id, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail.str() << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
