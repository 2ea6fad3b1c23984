// detox: counterfactual text detoxification from the command line.
//
//   detox run     --config FILE [overrides...]
//   detox explain --text "..." [overrides...]
//   detox eval    --original a.jsonl --rewritten b.jsonl [--oracle-url URL]

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "detox/errors.hpp"
#include "detox/evaluation.hpp"
#include "detox/http_backend.hpp"
#include "detox/pipeline.hpp"

namespace {

using detox::pipeline::PipelineConfig;

// Every pipeline setting is exposed as --<key> and may also appear in the
// config file; flags given on the command line win.
struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App& app, const std::string& key, const std::string& help) {
    auto* opt = app.add_option("--" + key, values[key], help);
    options.emplace_back(key, opt);
  }

  bool given(const std::string& key) const {
    for (const auto& [k, opt] : options) {
      if (k == key) return opt->count() > 0;
    }
    return false;
  }

  void apply(PipelineConfig& config) const {
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) detox::pipeline::apply_setting(config, key, values.at(key));
    }
  }
};

void add_pipeline_flags(CLI::App& app, Overrides& o, bool& refine_flag, CLI::Option*& refine_opt) {
  o.add(app, "input", "Input corpus (jsonl or csv)");
  o.add(app, "format", "Input format: jsonl|csv (default: by extension)");
  o.add(app, "text-field", "Text field name (default: text)");
  o.add(app, "id-field", "Id field name (default: id)");
  o.add(app, "backend", "Backend: toy|http (default: toy)");
  o.add(app, "toy-data", "Directory with toy backend data files");
  o.add(app, "toy-lexicon", "Steering lexicon file inside --toy-data");
  o.add(app, "toy-oracle-lexicon", "Oracle lexicon file inside --toy-data");
  o.add(app, "toy-bias", "Steering toy classifier bias (default: -1.0)");
  o.add(app, "toy-oracle-bias", "Oracle toy classifier bias (default: -1.0)");
  o.add(app, "toy-gradient-saliency", "Offer gradient saliency in the toy steering backend");
  o.add(app, "toy-attention", "Offer attention in the toy steering backend");
  o.add(app, "steering-url", "Steering model server, e.g. http://127.0.0.1:8080");
  o.add(app, "oracle-url", "Oracle model server");
  o.add(app, "timeout-ms", "HTTP timeout in milliseconds (default: 30000)");
  o.add(app, "max-retries", "HTTP retries on transport failure (default: 2)");
  o.add(app, "pool-size", "HTTP connection pool size (default: 4)");
  o.add(app, "lfi", "Targeting method: kshap|ig|attention (default: kshap)");
  o.add(app, "kshap-samples", "KernelSHAP coalitions (default: min(2^d, 2048))");
  o.add(app, "ig-steps", "Integrated Gradients steps (default: 32)");
  o.add(app, "cfi-steps", "Counterfactual feature importance steps (default: 32)");
  o.add(app, "alpha", "Cost weight of semantic distance (default: 0.3)");
  o.add(app, "beam-width", "Beam width (default: 4)");
  o.add(app, "top-k", "Infill candidates per position (default: 15)");
  o.add(app, "max-edit-fraction", "Largest fraction of tokens to edit (default: 0.5)");
  o.add(app, "max-expansions", "Node expansion budget (default: 1000)");
  o.add(app, "seed", "Global seed (default: 0)");
  o.add(app, "out", "Output directory (default: detox_out)");
  o.add(app, "workers", "Worker threads (default: hardware concurrency)");
  refine_opt = app.add_flag("--refine,!--no-refine", refine_flag,
                            "Refine counterfactuals with two or more edits (default: on)");
}

PipelineConfig build_config(const std::string& config_file, const Overrides& o,
                            const CLI::Option* refine_opt, bool refine_flag) {
  PipelineConfig config;
  if (!config_file.empty()) {
    for (const auto& [key, value] : detox::pipeline::read_config_file(config_file)) {
      detox::pipeline::apply_setting(config, key, value);
    }
  }
  o.apply(config);
  if (refine_opt->count() > 0) config.refine = refine_flag;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual text detoxification"};
  app.require_subcommand(1);

  std::string config_file;
  Overrides run_flags, explain_flags, eval_flags;
  bool run_refine = true, explain_refine = true, eval_refine = true;
  CLI::Option* run_refine_opt = nullptr;
  CLI::Option* explain_refine_opt = nullptr;
  CLI::Option* eval_refine_opt = nullptr;

  auto* run = app.add_subcommand("run", "Detoxify a corpus and evaluate the result");
  run->add_option("--config", config_file, "Flat key = value configuration file");
  add_pipeline_flags(*run, run_flags, run_refine, run_refine_opt);

  std::string text;
  auto* explain = app.add_subcommand("explain", "Show targeting, raw and refined counterfactual for one text");
  explain->add_option("--config", config_file, "Flat key = value configuration file");
  explain->add_option("--text", text, "Text to explain")->required();
  add_pipeline_flags(*explain, explain_flags, explain_refine, explain_refine_opt);

  std::string original_path, rewritten_path;
  auto* eval = app.add_subcommand("eval", "Score externally produced rewrites with the oracle backend");
  eval->add_option("--config", config_file, "Flat key = value configuration file");
  eval->add_option("--original", original_path, "Original texts (jsonl or csv)")->required();
  eval->add_option("--rewritten", rewritten_path, "Rewritten texts with matching ids")->required();
  add_pipeline_flags(*eval, eval_flags, eval_refine, eval_refine_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? detox::pipeline::kExitOk : detox::pipeline::kExitFatal;
  }

  try {
    if (*run) {
      const auto config = build_config(config_file, run_flags, run_refine_opt, run_refine);
      if (config.input.empty()) throw detox::ConfigError("no input corpus (--input)");
      const auto outcome = detox::pipeline::run(config);
      std::cout << detox::report_to_table(outcome.report,
                                          "cf-detox/" + std::string(detox::pipeline::to_string(config.lfi)));
      for (const auto& w : outcome.report.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << "wrote " << (config.out / "results.jsonl").string() << '\n';
      return outcome.exit_code;
    }
    if (*explain) {
      const auto config = build_config(config_file, explain_flags, explain_refine_opt, explain_refine);
      const auto backends = detox::pipeline::open_backends(config);
      return detox::pipeline::explain(config, backends, text, std::cout);
    }
    if (*eval) {
      auto config = build_config(config_file, eval_flags, eval_refine_opt, eval_refine);
      detox::BackendSuite oracle;
      if (!config.oracle_url.empty()) {
        oracle = detox::http::connect({config.oracle_url, config.timeout_ms, config.max_retries, "v1",
                                       config.pool_size});
      } else {
        config.backend = detox::pipeline::BackendKind::kToy;
        config.refine = false;
        oracle = detox::pipeline::open_backends(config).oracle;
      }
      const auto report =
          detox::pipeline::evaluate_rewrites(config, oracle, original_path, rewritten_path);
      std::cout << detox::report_to_table(report, "rewrites");
      if (eval_flags.given("out")) {
        std::filesystem::create_directories(config.out);
        std::ofstream(config.out / "report.json") << detox::report_to_json(report);
      }
      return report.n_failed > 0 ? detox::pipeline::kExitPartial : detox::pipeline::kExitOk;
    }
  } catch (const detox::NoCounterfactualFound& e) {
    std::cerr << "detox: " << e.what() << '\n';
    return detox::pipeline::kExitPartial;
  } catch (const std::exception& e) {
    std::cerr << "detox: " << e.what() << '\n';
    return detox::pipeline::kExitFatal;
  }
  return detox::pipeline::kExitFatal;
}
