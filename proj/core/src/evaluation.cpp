#include "detox/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "detox/errors.hpp"

namespace detox {

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyCorpus();
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower =
      *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

EvaluationReport evaluate(const BackendSuite& oracle, std::span<const EvalItem> items,
                          const BackendSuite* steering) {
  if (items.empty()) throw EmptyCorpus();
  EvaluationReport report;
  if (steering != nullptr &&
      (steering == &oracle || steering->classifier == oracle.classifier ||
       (!steering->name.empty() && steering->name == oracle.name))) {
    report.warnings.push_back("oracle backend is the steering backend; accuracy is not independent");
  }

  std::vector<TokenText> outputs, originals;
  outputs.reserve(items.size());
  originals.reserve(items.size());
  for (const auto& item : items) {
    originals.push_back(item.original);
    outputs.push_back(item.failed ? item.original : item.output);
  }
  const auto scores = classify(oracle, outputs);
  const auto out_vectors = embed(oracle, outputs);
  const auto in_vectors = embed(oracle, originals);
  const auto ppl_out = perplexity(oracle, outputs);
  const auto ppl_in = perplexity(oracle, originals);

  std::vector<double> ratios;
  ratios.reserve(items.size());
  double nontoxic = 0.0, tox = 0.0, sparsity = 0.0, cp = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    ItemRecord rec;
    rec.id = items[i].id;
    rec.failed = items[i].failed;
    auto& m = rec.metrics;
    m.p_toxic = scores[i].p_toxic;
    m.sparsity_percent = sparsity_percent(originals[i], outputs[i]);
    m.similarity = cosine(in_vectors[i], out_vectors[i]);
    // Cosine can dip below zero for unrelated texts; the percentage is floored.
    m.content_preservation_percent = 100.0 * std::max(0.0, m.similarity);
    m.ppl_original = ppl_in[i];
    m.ppl_output = ppl_out[i];
    m.delta_ppl = ppl_out[i] / ppl_in[i];
    rec.edit_distance = word_levenshtein(originals[i], outputs[i]);
    if (originals[i].size() == outputs[i].size()) rec.edits = diff(originals[i], outputs[i]);

    if (!scores[i].is_toxic()) nontoxic += 1.0;
    tox += m.p_toxic;
    sparsity += m.sparsity_percent;
    cp += m.content_preservation_percent;
    ratios.push_back(m.delta_ppl);
    if (rec.failed) ++report.n_failed;
    report.per_item.push_back(std::move(rec));
  }
  const auto n = static_cast<double>(items.size());
  report.n_inputs = items.size();
  report.n_success = report.n_inputs - report.n_failed;
  report.acc_percent = 100.0 * nontoxic / n;
  report.mean_toxicity_score = tox / n;
  report.sparsity_percent = sparsity / n;
  report.content_preservation_percent = cp / n;
  report.delta_ppl_median = median(std::move(ratios));
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["acc_percent"] = report.acc_percent;
  j["mean_toxicity_score"] = report.mean_toxicity_score;
  j["sparsity_percent"] = report.sparsity_percent;
  j["content_preservation_percent"] = report.content_preservation_percent;
  j["delta_ppl_median"] = report.delta_ppl_median;
  j["n_inputs"] = report.n_inputs;
  j["n_success"] = report.n_success;
  j["n_failed"] = report.n_failed;
  j["n_skipped"] = report.n_skipped;
  auto& items = j["per_item"] = ordered_json::array();
  for (const auto& rec : report.per_item) {
    ordered_json edits = ordered_json::array();
    for (const auto& e : rec.edits) {
      edits.push_back({{"position", e.position}, {"original", e.original}, {"replacement", e.replacement}});
    }
    items.push_back({{"id", rec.id},
                     {"metrics",
                      {{"p_toxic", rec.metrics.p_toxic},
                       {"sparsity_percent", rec.metrics.sparsity_percent},
                       {"content_preservation_percent", rec.metrics.content_preservation_percent},
                       {"delta_ppl", rec.metrics.delta_ppl}}},
                     {"edit_distance", rec.edit_distance},
                     {"edits", std::move(edits)},
                     {"failed", rec.failed}});
  }
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvaluationReport& report, std::string_view label) {
  std::ostringstream out;
  const int name_width = 10;
  const int value_width = std::max<int>(12, static_cast<int>(label.size()) + 2);
  out << std::left << std::setw(name_width) << "metric" << std::right << std::setw(value_width)
      << label << '\n';
  auto row = [&](std::string_view name, double value, int precision) {
    out << std::left << std::setw(name_width) << name << std::right << std::setw(value_width)
        << std::fixed << std::setprecision(precision) << value << '\n';
  };
  row("dPPL", report.delta_ppl_median, 2);
  row("%CP", report.content_preservation_percent, 1);
  row("%S", report.sparsity_percent, 1);
  row("%ACC", report.acc_percent, 1);
  row("SCORE", report.mean_toxicity_score, 2);
  out << "n_inputs=" << report.n_inputs << " n_success=" << report.n_success
      << " n_failed=" << report.n_failed << " n_skipped=" << report.n_skipped << '\n';
  return out.str();
}

}  // namespace detox
