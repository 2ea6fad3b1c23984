#include "detox/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "detox/corpus_io.hpp"
#include "detox/errors.hpp"
#include "detox/http_backend.hpp"
#include "detox/random.hpp"
#include "detox/toy_backend.hpp"

namespace detox::pipeline {
namespace {

using nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string normalize_key(std::string_view key) {
  std::string k = trim(key);
  while (!k.empty() && k.front() == '-') k.erase(k.begin());
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

double to_double(std::string_view key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError("setting '" + std::string(key) + "': expected a number, got '" + v + "'");
  }
  return d;
}

std::uint64_t to_uint(std::string_view key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("setting '" + std::string(key) + "': expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError("setting '" + std::string(key) + "': value out of range");
  }
}

bool to_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("setting '" + std::string(key) + "': expected a boolean, got '" + v + "'");
}

ordered_json edits_json(const EditSet& edits) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : edits) {
    arr.push_back({{"position", e.position}, {"original", e.original}, {"replacement", e.replacement}});
  }
  return arr;
}

ItemResult failed_item(std::string id, std::string original, std::string error) {
  ItemResult r;
  r.id = std::move(id);
  r.detoxified = original;
  r.original = std::move(original);
  r.status = ItemStatus::kFailed;
  r.error = std::move(error);
  return r;
}

// Runs `fn(i)` for i in [0, n) over a pool of worker threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (workers == 1) {
    body();
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

void print_scores(std::ostream& out, const TokenText& x, const ImportanceVector& imp,
                  std::size_t highlight) {
  std::size_t width = 5;
  for (const auto& t : x.tokens()) width = std::max(width, t.size());
  auto top = imp.ranking();
  top.resize(std::min(highlight, top.size()));
  out << "  " << std::left << std::setw(5) << "pos" << std::setw(static_cast<int>(width) + 2)
      << "token" << "score\n";
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool marked = std::find(top.begin(), top.end(), i) != top.end();
    // Keep rounding noise from printing as -0.0000.
    const double shown = std::abs(imp.scores[i]) < 5e-5 ? 0.0 : imp.scores[i];
    out << "  " << std::left << std::setw(5) << i << std::setw(static_cast<int>(width) + 2) << x[i]
        << std::right << std::fixed << std::setprecision(4) << std::setw(8) << shown
        << (marked && imp.scores[i] > 0.0 ? "  <" : "") << '\n';
  }
  out.unsetf(std::ios::fixed);
}

void print_result(std::ostream& out, const CounterfactualResult& r) {
  out << "  text:       " << r.counterfactual.raw() << '\n'
      << std::fixed << std::setprecision(4)
      << "  cost:       " << r.cost << '\n'
      << "  p_nontoxic: " << r.p_nontoxic << '\n'
      << "  similarity: " << r.similarity << '\n';
  out.unsetf(std::ios::fixed);
  out << "  edits (" << r.edits.size() << "):\n";
  for (const auto& e : r.edits) {
    out << "    [" << e.position << "] " << e.original << " -> " << e.replacement << '\n';
  }
}

}  // namespace

std::string_view to_string(LfiMethod method) {
  switch (method) {
    case LfiMethod::kKernelShap: return "kshap";
    case LfiMethod::kIntegratedGradients: return "ig";
    case LfiMethod::kAttention: return "attention";
  }
  return "unknown";
}

std::string_view to_string(ItemStatus status) {
  switch (status) {
    case ItemStatus::kOk: return "ok";
    case ItemStatus::kFailed: return "failed";
    case ItemStatus::kSkipped: return "skipped";
  }
  return "unknown";
}

void apply_setting(PipelineConfig& c, std::string_view raw_key, std::string_view raw_value) {
  const auto key = normalize_key(raw_key);
  const auto v = trim(raw_value);
  if (key == "input") c.input = v;
  else if (key == "format") c.format = v;
  else if (key == "text_field") c.text_field = v;
  else if (key == "id_field") c.id_field = v;
  else if (key == "backend") {
    if (v == "toy") c.backend = BackendKind::kToy;
    else if (v == "http") c.backend = BackendKind::kHttp;
    else throw ConfigError("backend must be toy or http, got '" + v + "'");
  }
  else if (key == "toy_data") c.toy_data = v;
  else if (key == "toy_lexicon") c.toy_lexicon = v;
  else if (key == "toy_oracle_lexicon") c.toy_oracle_lexicon = v;
  else if (key == "toy_bias") c.toy_bias = to_double(key, v);
  else if (key == "toy_oracle_bias") c.toy_oracle_bias = to_double(key, v);
  else if (key == "toy_gradient_saliency") c.toy_gradient_saliency = to_bool(key, v);
  else if (key == "toy_attention") c.toy_attention = to_bool(key, v);
  else if (key == "steering_url") c.steering_url = v;
  else if (key == "oracle_url") c.oracle_url = v;
  else if (key == "timeout_ms") c.timeout_ms = static_cast<int>(to_uint(key, v));
  else if (key == "max_retries") c.max_retries = static_cast<int>(to_uint(key, v));
  else if (key == "pool_size") c.pool_size = to_uint(key, v);
  else if (key == "lfi") {
    if (v == "kshap") c.lfi = LfiMethod::kKernelShap;
    else if (v == "ig") c.lfi = LfiMethod::kIntegratedGradients;
    else if (v == "attention") c.lfi = LfiMethod::kAttention;
    else throw ConfigError("lfi must be kshap, ig or attention, got '" + v + "'");
  }
  else if (key == "kshap_samples") c.kshap_samples = to_uint(key, v);
  else if (key == "ig_steps") c.ig_steps = to_uint(key, v);
  else if (key == "cfi_steps") c.cfi_steps = to_uint(key, v);
  else if (key == "alpha") c.search.alpha = to_double(key, v);
  else if (key == "beam_width") c.search.beam_width = to_uint(key, v);
  else if (key == "top_k") c.search.top_k_candidates = to_uint(key, v);
  else if (key == "max_edit_fraction") c.search.max_edit_fraction = to_double(key, v);
  else if (key == "max_expansions") c.search.max_expansions = to_uint(key, v);
  else if (key == "refine") c.refine = to_bool(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "out") c.out = v;
  else if (key == "workers") c.workers = to_uint(key, v);
  else throw ConfigError("unknown setting '" + key + "'");
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out[normalize_key(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

Backends open_backends(const PipelineConfig& config) {
  config.search.validate();
  Backends b;
  if (config.backend == BackendKind::kToy) {
    const auto dir = config.toy_data.empty() ? toy::default_data_dir() : config.toy_data;
    toy::ToySuiteOptions steering{"toy-steering", config.toy_lexicon, config.toy_bias,
                                  config.toy_gradient_saliency, config.toy_attention};
    toy::ToySuiteOptions oracle{"toy-oracle", config.toy_oracle_lexicon, config.toy_oracle_bias,
                                true, true};
    b.steering = toy::load_suite(dir, steering);
    b.oracle = toy::load_suite(dir, oracle);
  } else {
    if (config.steering_url.empty()) throw ConfigError("http backend needs steering_url");
    if (config.oracle_url.empty()) throw ConfigError("http backend needs oracle_url");
    http::ServerConfig sc{config.steering_url, config.timeout_ms, config.max_retries, "v1",
                          config.pool_size};
    b.steering = http::connect(sc);
    sc.base_url = config.oracle_url;
    b.oracle = http::connect(sc);
  }
  b.steering.validate();
  b.oracle.validate();
  const auto caps = b.steering.capabilities();
  if (config.lfi == LfiMethod::kIntegratedGradients && !caps.gradient_saliency) {
    throw CapabilityUnavailable("gradient_saliency (required by --lfi ig)");
  }
  if (config.lfi == LfiMethod::kAttention && !caps.attention) {
    throw CapabilityUnavailable("attention (required by --lfi attention)");
  }
  if (config.refine && !caps.gradient_saliency) {
    throw CapabilityUnavailable("gradient_saliency (required by refinement; pass --no-refine)");
  }
  return b;
}

std::uint64_t item_seed(std::uint64_t global_seed, std::string_view id) {
  return global_seed ^ fnv1a64(id);
}

ImportanceVector local_importance(const BackendSuite& suite, const TokenText& x,
                                  const PipelineConfig& config, std::uint64_t seed) {
  switch (config.lfi) {
    case LfiMethod::kKernelShap:
      return kernel_shap(suite, x, {config.kshap_samples, seed, ShapMode::kAuto});
    case LfiMethod::kIntegratedGradients:
      return integrated_gradients(suite, x, config.ig_steps, BaselineSpec::mask());
    case LfiMethod::kAttention:
      return self_attention_importance(suite, x);
  }
  throw ConfigError("unknown lfi method");
}

ItemResult process_text(const Backends& backends, const PipelineConfig& config,
                        const std::string& id, const TokenText& x) {
  ItemResult r;
  r.id = id;
  r.original = x.raw();
  r.detoxified = x.raw();
  try {
    const auto seed = item_seed(config.seed, id);
    r.steering_p_toxic_input = classify(backends.steering, x).p_toxic;
    const auto importance = local_importance(backends.steering, x, config, seed);
    auto search = config.search;
    search.seed = seed;
    const auto raw = generate_cf(backends.steering, x, importance, search);
    r.raw_edit_count = raw.edits.size();
    const auto result =
        config.refine ? detox::refine(backends.steering, x, raw, search, config.cfi_steps) : raw;
    r.detoxified = result.counterfactual.raw();
    r.edits = result.edits;
    r.refined = result.refined;
    r.steering_p_nontoxic_output = result.p_nontoxic;
    r.cost = result.cost;
  } catch (const std::exception& e) {
    auto failed = failed_item(id, x.raw(), e.what());
    failed.steering_p_toxic_input = r.steering_p_toxic_input;
    return failed;
  }
  return r;
}

RunOutcome run(const PipelineConfig& config) { return run(config, open_backends(config)); }

RunOutcome run(const PipelineConfig& config, const Backends& backends) {
  const auto records = read_corpus(config.input, config.format, config.text_field, config.id_field);

  std::vector<ItemResult> items(records.size());
  parallel_for(records.size(), config.workers, [&](std::size_t i) {
    const auto& rec = records[i];
    ItemResult result;
    try {
      const auto x = tokenize(rec.text);
      const auto score = classify(backends.steering, x);
      if (!score.is_toxic()) {
        result.id = rec.id;
        result.original = rec.text;
        result.detoxified = rec.text;
        result.status = ItemStatus::kSkipped;
        result.error = "non-toxic";
        result.steering_p_toxic_input = score.p_toxic;
      } else {
        result = process_text(backends, config, rec.id, x);
      }
    } catch (const EmptyText& e) {
      result = failed_item(rec.id, rec.text, e.what());
      result.status = ItemStatus::kSkipped;
    } catch (const std::exception& e) {
      result = failed_item(rec.id, rec.text, e.what());
    }
    result.extra_json = rec.extra_json;
    items[i] = std::move(result);
  });
  std::stable_sort(items.begin(), items.end(),
                   [](const ItemResult& a, const ItemResult& b) { return id_less(a.id, b.id); });

  std::vector<EvalItem> eval_items;
  std::vector<std::size_t> eval_index;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].status == ItemStatus::kSkipped) {
      ++skipped;
      continue;
    }
    auto original = tokenize(items[i].original);
    auto output = tokenize(items[i].detoxified);
    eval_items.push_back({items[i].id, std::move(original), std::move(output),
                          items[i].status == ItemStatus::kFailed});
    eval_index.push_back(i);
  }

  RunOutcome outcome;
  if (!eval_items.empty()) {
    outcome.report = evaluate(backends.oracle, eval_items, &backends.steering);
    for (std::size_t k = 0; k < eval_index.size(); ++k) {
      items[eval_index[k]].evaluation = outcome.report.per_item[k];
    }
  }
  outcome.report.n_skipped = skipped;
  outcome.items = std::move(items);
  outcome.exit_code = outcome.report.n_failed > 0 ? kExitPartial : kExitOk;

  std::filesystem::create_directories(config.out);
  write_file(config.out / "results.jsonl", results_to_jsonl(outcome.items));
  write_file(config.out / "report.json", report_to_json(outcome.report));
  write_file(config.out / "report.txt",
             report_to_table(outcome.report, "cf-detox/" + std::string(to_string(config.lfi))));
  return outcome;
}

std::string results_to_jsonl(const std::vector<ItemResult>& items) {
  std::string out;
  for (const auto& r : items) {
    ordered_json j;
    j["id"] = r.id;
    j["status"] = std::string(to_string(r.status));
    j["original"] = r.original;
    j["detoxified"] = r.detoxified;
    j["edits"] = edits_json(r.edits);
    j["raw_edit_count"] = r.raw_edit_count;
    j["refined"] = r.refined;
    j["steering"] = {{"p_toxic_input", r.steering_p_toxic_input},
                     {"p_nontoxic_output", r.steering_p_nontoxic_output},
                     {"cost", r.cost}};
    if (r.evaluation) {
      const auto& m = r.evaluation->metrics;
      j["oracle"] = {{"p_toxic", m.p_toxic}};
      j["metrics"] = {{"sparsity_percent", m.sparsity_percent},
                      {"content_preservation_percent", m.content_preservation_percent},
                      {"delta_ppl", m.delta_ppl}};
    } else {
      j["oracle"] = nullptr;
      j["metrics"] = nullptr;
    }
    j["error"] = r.error.empty() ? ordered_json(nullptr) : ordered_json(r.error);
    j["extra"] = ordered_json::parse(r.extra_json);
    out += j.dump();
    out += '\n';
  }
  return out;
}

int explain(const PipelineConfig& config, const Backends& backends, std::string_view text,
            std::ostream& out) {
  const auto x = tokenize(text);
  const auto score = classify(backends.steering, x);
  out << "input:            " << x.raw() << '\n'
      << "steering p_toxic: " << std::fixed << std::setprecision(4) << score.p_toxic << '\n';
  out.unsetf(std::ios::fixed);
  if (!score.is_toxic()) {
    out << "input not classified toxic; nothing to do\n";
    return kExitOk;
  }

  const auto seed = item_seed(config.seed, "explain");
  const auto importance = local_importance(backends.steering, x, config, seed);
  out << "\n[1] targeting (" << to_string(config.lfi) << ")\n";
  print_scores(out, x, importance, 1);

  auto search = config.search;
  search.seed = seed;
  CounterfactualResult raw = [&] {
    try {
      return generate_cf(backends.steering, x, importance, search);
    } catch (const NoCounterfactualFound& e) {
      out << "\n[2] replace: no counterfactual found (" << e.what() << ")\n";
      throw;
    }
  }();
  out << "\n[2] raw counterfactual\n";
  print_result(out, raw);

  out << "\n[3] refine: ";
  if (!config.refine) {
    out << "disabled\n";
    return kExitOk;
  }
  if (raw.edits.size() < 2) {
    out << "not applicable (" << raw.edits.size() << " edit)\n";
    return kExitOk;
  }
  const auto importance_cf = cfi(backends.steering, x, raw.counterfactual, config.cfi_steps);
  out << "counterfactual feature importance\n";
  print_scores(out, x, importance_cf, raw.edits.size());
  const auto refined = refine(backends.steering, x, raw, search, config.cfi_steps);
  if (refined.refined) {
    out << "  refined counterfactual accepted\n";
    print_result(out, refined);
  } else {
    out << "  raw counterfactual kept (no smaller or cheaper flip)\n";
  }
  return kExitOk;
}

EvaluationReport evaluate_rewrites(const PipelineConfig& config, const BackendSuite& oracle,
                                   const std::filesystem::path& original,
                                   const std::filesystem::path& rewritten) {
  const auto originals = read_corpus(original, config.format, config.text_field, config.id_field);
  const auto rewrites = read_corpus(rewritten, config.format, config.text_field, config.id_field);
  std::unordered_map<std::string, const CorpusRecord*> by_id;
  for (const auto& r : rewrites) by_id.emplace(r.id, &r);

  std::vector<EvalItem> items;
  for (const auto& rec : originals) {
    const auto x = tokenize(rec.text);
    const auto it = by_id.find(rec.id);
    bool failed = it == by_id.end();
    TokenText output = x;
    if (!failed) {
      try {
        output = tokenize(it->second->text);
      } catch (const EmptyText&) {
        failed = true;
      }
    }
    items.push_back({rec.id, x, failed ? x : output, failed});
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const EvalItem& a, const EvalItem& b) { return id_less(a.id, b.id); });
  return evaluate(oracle, items);
}

}  // namespace detox::pipeline
