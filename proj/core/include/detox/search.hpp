#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "detox/attribution.hpp"
#include "detox/backend.hpp"
#include "detox/text.hpp"

namespace detox {

struct SearchConfig {
  double alpha = 0.3;
  std::size_t beam_width = 4;
  std::size_t top_k_candidates = 15;
  /// Fraction of tokens that may be edited, rounded up.
  double max_edit_fraction = 0.5;
  /// Upper bound on node expansions before giving up.
  std::size_t max_expansions = 1000;
  /// Recorded with results; the beam procedure itself draws no randomness.
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  std::size_t edit_budget(std::size_t d) const;
};

struct BeamNode {
  std::vector<std::string> tokens;
  std::vector<std::size_t> edited;  // sorted
  std::size_t rank_cursor = 0;
  double cost = 0.0;
  double p_nontoxic = 0.0;
  double sim = 1.0;
};

struct TraceEntry {
  std::size_t expansion = 0;
  double cost = 0.0;
  double p_nontoxic = 0.0;
  double similarity = 0.0;
};

struct CounterfactualResult {
  TokenText original;
  TokenText counterfactual;
  EditSet edits;
  double cost = 0.0;
  double p_nontoxic = 0.0;
  double similarity = 1.0;
  bool refined = false;
  /// Best node of every expansion wave.
  std::vector<TraceEntry> trace;
};

/// -(p_nontoxic - alpha * (1 - similarity) / 2).
double cost(double p_nontoxic, double similarity, double alpha);
double cost(const BackendSuite& suite, const TokenText& z, const TokenText& x, double alpha);

/// Scores an arbitrary same-length rewrite of `x` as a result (no trace).
CounterfactualResult make_result(const BackendSuite& suite, const TokenText& x,
                                 const TokenText& counterfactual, double alpha);

/// Target-then-replace beam search for a non-toxic substitution of `x`.
///
/// Positions are visited in `importance.ranking()` order. Each wave expands
/// the beam_width cheapest open nodes; every expansion proposes one child
/// per infill candidate at the node's target position plus a "skip" child
/// that leaves the position untouched. The first wave that produces any
/// flipped child (p_nontoxic > 0.5) ends the search with its cheapest flip.
///
/// Throws InputNotToxic if `x` is not toxic under the suite's classifier and
/// NoCounterfactualFound when the tree or the expansion budget is exhausted.
CounterfactualResult generate_cf(const BackendSuite& suite, const TokenText& x,
                                 const ImportanceVector& importance, const SearchConfig& config);

/// Re-runs the search on the positions edited by `raw` only, ordered by
/// counterfactual feature importance, with the raw replacement and fresh
/// infill candidates available at each one (leaving a position untouched
/// reverts it). The refined result replaces `raw` only if it uses fewer
/// edits, or as many edits at strictly lower cost. Results with fewer than
/// two edits are returned unchanged.
CounterfactualResult refine(const BackendSuite& suite, const TokenText& x,
                            const CounterfactualResult& raw, const SearchConfig& config,
                            std::size_t steps = kDefaultIgSteps);

}  // namespace detox
