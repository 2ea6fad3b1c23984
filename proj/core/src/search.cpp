#include "detox/search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "detox/errors.hpp"

namespace detox {
namespace {

using CandidateFn = std::function<std::vector<std::string>(const BeamNode&, std::size_t)>;

bool node_less(const BeamNode& a, const BeamNode& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  if (a.rank_cursor != b.rank_cursor) return a.rank_cursor < b.rank_cursor;
  return a.edited < b.edited;
}

bool is_edited(const BeamNode& node, std::size_t position) {
  return std::binary_search(node.edited.begin(), node.edited.end(), position);
}

// Drops no-op, mask and multi-token candidates and duplicates, keeping order.
std::vector<std::string> usable_candidates(const BackendSuite& suite, const std::string& current,
                                           std::vector<std::string> proposals) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& token : proposals) {
    if (token == current || token == suite.mask_token || !is_single_token(token)) continue;
    if (seen.insert(token).second) out.push_back(std::move(token));
  }
  return out;
}

class BeamSearch {
 public:
  BeamSearch(const BackendSuite& suite, const TokenText& x, std::vector<std::size_t> ranking,
             CandidateFn candidates, const SearchConfig& config)
      : suite_(suite),
        x_(x),
        x_embedding_(embed(suite, x)),
        ranking_(std::move(ranking)),
        candidates_(std::move(candidates)),
        config_(config),
        budget_(config.edit_budget(x.size())) {}

  CounterfactualResult run() {
    std::vector<BeamNode> open;
    {
      BeamNode root;
      root.tokens = x_.tokens();
      evaluate({&root, 1});
      open.push_back(std::move(root));
    }
    std::vector<TraceEntry> trace;
    std::size_t expansions = 0;

    while (!open.empty()) {
      if (expansions >= config_.max_expansions) {
        throw NoCounterfactualFound("expansion budget of " +
                                    std::to_string(config_.max_expansions) + " exhausted");
      }
      std::sort(open.begin(), open.end(), node_less);
      const std::size_t width =
          std::min({config_.beam_width, open.size(), config_.max_expansions - expansions});
      std::vector<BeamNode> wave(std::make_move_iterator(open.begin()),
                                 std::make_move_iterator(open.begin() + static_cast<std::ptrdiff_t>(width)));
      open.erase(open.begin(), open.begin() + static_cast<std::ptrdiff_t>(width));

      std::vector<BeamNode> fresh;   // substitutions, need scoring
      std::vector<BeamNode> skips;   // inherit the parent's scores
      for (auto& node : wave) {
        ++expansions;
        std::size_t cursor = node.rank_cursor;
        while (cursor < ranking_.size() && is_edited(node, ranking_[cursor])) ++cursor;
        if (cursor >= ranking_.size()) continue;
        const std::size_t position = ranking_[cursor];

        if (node.edited.size() < budget_) {
          for (auto& token : candidates_(node, position)) {
            BeamNode child;
            child.tokens = node.tokens;
            child.tokens[position] = std::move(token);
            child.edited = node.edited;
            child.edited.insert(std::upper_bound(child.edited.begin(), child.edited.end(), position),
                                position);
            child.rank_cursor = cursor + 1;
            fresh.push_back(std::move(child));
          }
        }
        if (cursor + 1 < ranking_.size()) {
          BeamNode skip = node;
          skip.rank_cursor = cursor + 1;
          skips.push_back(std::move(skip));
        }
      }
      evaluate(fresh);

      std::vector<BeamNode> successes;
      const BeamNode* best = nullptr;
      for (auto* group : {&fresh, &skips}) {
        for (auto& child : *group) {
          if (best == nullptr || node_less(child, *best)) best = &child;
        }
      }
      if (best != nullptr) trace.push_back({expansions, best->cost, best->p_nontoxic, best->sim});

      for (auto* group : {&fresh, &skips}) {
        for (auto& child : *group) {
          if (child.p_nontoxic > 0.5) {
            successes.push_back(std::move(child));
          } else if (child.rank_cursor < ranking_.size()) {
            open.push_back(std::move(child));
          }
        }
      }
      if (!successes.empty()) {
        const auto& winner = *std::min_element(successes.begin(), successes.end(), node_less);
        return to_result(winner, std::move(trace));
      }
    }
    throw NoCounterfactualFound("search space exhausted without a label flip");
  }

 private:
  void evaluate(std::span<BeamNode> nodes) {
    if (nodes.empty()) return;
    std::vector<TokenText> texts;
    texts.reserve(nodes.size());
    for (const auto& n : nodes) texts.push_back(TokenText::from_tokens(n.tokens));
    const auto scores = classify(suite_, texts);
    const auto vectors = embed(suite_, texts);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      nodes[i].p_nontoxic = scores[i].p_nontoxic;
      nodes[i].sim = cosine(vectors[i], x_embedding_);
      nodes[i].cost = cost(nodes[i].p_nontoxic, nodes[i].sim, config_.alpha);
    }
  }

  CounterfactualResult to_result(const BeamNode& node, std::vector<TraceEntry> trace) const {
    auto cf = TokenText::from_tokens(node.tokens);
    auto edits = diff(x_, cf);
    return CounterfactualResult{x_,         std::move(cf), std::move(edits), node.cost,
                                node.p_nontoxic, node.sim,  false,            std::move(trace)};
  }

  const BackendSuite& suite_;
  const TokenText& x_;
  std::vector<double> x_embedding_;
  std::vector<std::size_t> ranking_;
  CandidateFn candidates_;
  SearchConfig config_;
  std::size_t budget_;
};

}  // namespace

void SearchConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (beam_width == 0) throw ConfigError("beam_width must be positive");
  if (top_k_candidates == 0) throw ConfigError("top_k_candidates must be positive");
  if (!(max_edit_fraction > 0.0 && max_edit_fraction <= 1.0)) {
    throw ConfigError("max_edit_fraction must be in (0, 1]");
  }
  if (max_expansions == 0) throw ConfigError("max_expansions must be positive");
}

std::size_t SearchConfig::edit_budget(std::size_t d) const {
  // Guard against 0.5 * 4 = 2.0000000000000004 style rounding before ceil.
  const double raw = max_edit_fraction * static_cast<double>(d);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

double cost(double p_nontoxic, double similarity, double alpha) {
  return -(p_nontoxic - alpha * semantic_distance(similarity));
}

double cost(const BackendSuite& suite, const TokenText& z, const TokenText& x, double alpha) {
  return cost(classify(suite, z).p_nontoxic, similarity(suite, z, x), alpha);
}

CounterfactualResult make_result(const BackendSuite& suite, const TokenText& x,
                                 const TokenText& counterfactual, double alpha) {
  auto edits = diff(x, counterfactual);
  const double p = classify(suite, counterfactual).p_nontoxic;
  const double s = similarity(suite, counterfactual, x);
  return CounterfactualResult{x, counterfactual, std::move(edits), cost(p, s, alpha), p, s, false, {}};
}

CounterfactualResult generate_cf(const BackendSuite& suite, const TokenText& x,
                                 const ImportanceVector& importance, const SearchConfig& config) {
  config.validate();
  if (importance.size() != x.size()) throw LengthMismatch(x.size(), importance.size());
  if (!classify(suite, x).is_toxic()) throw InputNotToxic();

  auto candidates = [&suite, &config](const BeamNode& node, std::size_t position) {
    const auto text = TokenText::from_tokens(node.tokens);
    std::vector<std::string> proposals;
    for (auto& c : fill_mask(suite, text, position, config.top_k_candidates)) {
      proposals.push_back(std::move(c.token));
    }
    return usable_candidates(suite, node.tokens[position], std::move(proposals));
  };
  return BeamSearch(suite, x, importance.ranking(), candidates, config).run();
}

CounterfactualResult refine(const BackendSuite& suite, const TokenText& x,
                            const CounterfactualResult& raw, const SearchConfig& config,
                            std::size_t steps) {
  config.validate();
  if (raw.edits.size() < 2) {
    auto unchanged = raw;
    unchanged.refined = false;
    return unchanged;
  }
  const auto importance = cfi(suite, x, raw.counterfactual, steps);
  std::vector<std::size_t> ranking;
  for (const auto pos : importance.ranking()) {
    if (x[pos] != raw.counterfactual[pos]) ranking.push_back(pos);
  }

  const auto& raw_cf = raw.counterfactual;
  auto candidates = [&](const BeamNode& node, std::size_t position) {
    std::vector<std::string> proposals{raw_cf[position]};
    const auto text = TokenText::from_tokens(node.tokens);
    for (auto& c : fill_mask(suite, text, position, config.top_k_candidates)) {
      proposals.push_back(std::move(c.token));
    }
    // The original token is offered too; it coincides with leaving the
    // position untouched and is filtered as a no-op.
    proposals.push_back(x[position]);
    return usable_candidates(suite, node.tokens[position], std::move(proposals));
  };

  CounterfactualResult candidate = raw;
  try {
    candidate = BeamSearch(suite, x, std::move(ranking), candidates, config).run();
  } catch (const NoCounterfactualFound&) {
    auto unchanged = raw;
    unchanged.refined = false;
    return unchanged;
  }
  const bool fewer = candidate.edits.size() < raw.edits.size();
  const bool cheaper = candidate.edits.size() == raw.edits.size() && candidate.cost < raw.cost;
  if (candidate.p_nontoxic > 0.5 && (fewer || cheaper)) {
    candidate.refined = true;
    return candidate;
  }
  auto unchanged = raw;
  unchanged.refined = false;
  return unchanged;
}

}  // namespace detox
