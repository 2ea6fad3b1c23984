#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "detox/attribution.hpp"
#include "detox/backend.hpp"
#include "detox/evaluation.hpp"
#include "detox/search.hpp"

namespace detox::pipeline {

enum class BackendKind { kToy, kHttp };
enum class LfiMethod { kKernelShap, kIntegratedGradients, kAttention };

std::string_view to_string(LfiMethod method);

/// Exit statuses shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitFatal = 2;

struct PipelineConfig {
  std::filesystem::path input;
  std::string format;  // "jsonl" | "csv"; empty infers from extension
  std::string text_field = "text";
  std::string id_field = "id";

  BackendKind backend = BackendKind::kToy;
  // Toy backends: steering and oracle use different lexicons.
  std::filesystem::path toy_data;  // empty selects the shipped data
  std::string toy_lexicon = "lexicon.tsv";
  std::string toy_oracle_lexicon = "oracle_lexicon.tsv";
  double toy_bias = -1.0;
  double toy_oracle_bias = -1.0;
  bool toy_gradient_saliency = true;
  bool toy_attention = true;
  // HTTP backends.
  std::string steering_url;
  std::string oracle_url;
  int timeout_ms = 30000;
  int max_retries = 2;
  std::size_t pool_size = 4;

  LfiMethod lfi = LfiMethod::kKernelShap;
  std::size_t kshap_samples = 0;  // 0 = min(2^d, 2048)
  std::size_t ig_steps = kDefaultIgSteps;
  SearchConfig search;
  bool refine = true;
  std::size_t cfi_steps = kDefaultIgSteps;
  std::uint64_t seed = 0;

  std::filesystem::path out = "detox_out";
  std::size_t workers = 0;  // 0 = hardware concurrency
};

/// Applies one `key = value` setting. Keys match the long command-line flag
/// names with dashes or underscores. Throws ConfigError.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value);

/// Reads a flat `key = value` file ('#' starts a comment). Throws ConfigError.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

struct Backends {
  BackendSuite steering;
  BackendSuite oracle;
};

/// Builds both suites and checks that the LFI method's capability exists.
/// Throws CapabilityUnavailable, ConnectError, ConfigError.
Backends open_backends(const PipelineConfig& config);

/// Per-item seed: global seed XOR a stable hash of the item id.
std::uint64_t item_seed(std::uint64_t global_seed, std::string_view id);

ImportanceVector local_importance(const BackendSuite& suite, const TokenText& x,
                                  const PipelineConfig& config, std::uint64_t seed);

enum class ItemStatus { kOk, kFailed, kSkipped };
std::string_view to_string(ItemStatus status);

struct ItemResult {
  std::string id;
  std::string original;
  std::string detoxified;
  ItemStatus status = ItemStatus::kOk;
  std::string error;
  EditSet edits;
  std::size_t raw_edit_count = 0;
  bool refined = false;
  double steering_p_toxic_input = 0.0;
  double steering_p_nontoxic_output = 0.0;
  double cost = 0.0;
  std::optional<ItemRecord> evaluation;
  std::string extra_json = "{}";
};

/// Runs targeting, generation and (when applicable) refinement on one text
/// already known to be toxic. Never throws for per-item failures; they are
/// reported through `status`.
ItemResult process_text(const Backends& backends, const PipelineConfig& config,
                        const std::string& id, const TokenText& x);

struct RunOutcome {
  EvaluationReport report;
  std::vector<ItemResult> items;  // sorted by id
  int exit_code = kExitOk;
};

/// Ingest, filter to toxic texts, detoxify, evaluate, and write
/// results.jsonl, report.json and report.txt into `config.out`.
RunOutcome run(const PipelineConfig& config);
RunOutcome run(const PipelineConfig& config, const Backends& backends);

/// One JSON object per item, newline-terminated.
std::string results_to_jsonl(const std::vector<ItemResult>& items);

/// Prints a single-text breakdown (targeting scores, raw and refined
/// counterfactual) to `out` and returns the exit status.
int explain(const PipelineConfig& config, const Backends& backends, std::string_view text,
            std::ostream& out);

/// Scores externally produced rewrites matched by id against the originals.
/// Originals without a rewrite are counted as failures.
EvaluationReport evaluate_rewrites(const PipelineConfig& config, const BackendSuite& oracle,
                                   const std::filesystem::path& original,
                                   const std::filesystem::path& rewritten);

}  // namespace detox::pipeline
