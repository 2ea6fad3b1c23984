#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detox/backend.hpp"
#include "detox/text.hpp"

namespace detox {

/// One rewritten text to score. Failed items are scored with their original
/// text as output.
struct EvalItem {
  std::string id;
  TokenText original;
  TokenText output;
  bool failed = false;
};

struct ItemMetrics {
  double p_toxic = 0.0;  // oracle, on the output
  double sparsity_percent = 100.0;
  double similarity = 1.0;
  double content_preservation_percent = 100.0;
  double ppl_original = 1.0;
  double ppl_output = 1.0;
  double delta_ppl = 1.0;
};

struct ItemRecord {
  std::string id;
  ItemMetrics metrics;
  EditSet edits;  // empty when lengths differ
  std::size_t edit_distance = 0;
  bool failed = false;
};

struct EvaluationReport {
  double acc_percent = 0.0;
  double mean_toxicity_score = 0.0;
  double sparsity_percent = 0.0;
  double content_preservation_percent = 0.0;
  double delta_ppl_median = 1.0;
  std::size_t n_inputs = 0;
  std::size_t n_success = 0;
  std::size_t n_failed = 0;
  /// Set by the pipeline; items dropped before generation.
  std::size_t n_skipped = 0;
  std::vector<ItemRecord> per_item;
  std::vector<std::string> warnings;
};

/// Median of `values`; the mean of the two middle elements for even sizes.
double median(std::vector<double> values);

/// Corpus metrics under the oracle backend. %ACC and SCORE use the oracle's
/// decision on each output; %S and %CP are item means; DeltaPPL is the median
/// of per-item PPL(output) / PPL(original). A warning is recorded when
/// `steering` is the same backend as `oracle`. Throws EmptyCorpus.
EvaluationReport evaluate(const BackendSuite& oracle, std::span<const EvalItem> items,
                          const BackendSuite* steering = nullptr);

std::string report_to_json(const EvaluationReport& report);
/// Aligned plain-text table, rows: DeltaPPL, %CP, %S, %ACC, SCORE.
std::string report_to_table(const EvaluationReport& report, std::string_view label = "detox");

}  // namespace detox
