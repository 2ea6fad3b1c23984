#include "detox/backend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "detox/errors.hpp"

namespace detox {

double ToxicityScore::toxic_logit() const { return std::log(p_toxic) - std::log(p_nontoxic); }

ToxicityScore ToxicityScore::from_logit(double toxic_logit) {
  // Evaluate the smaller probability directly to keep precision in the tails.
  if (toxic_logit >= 0.0) {
    const double q = 1.0 / (1.0 + std::exp(toxic_logit));
    return {1.0 - q, q};
  }
  const double p = 1.0 / (1.0 + std::exp(-toxic_logit));
  return {p, 1.0 - p};
}

ToxicityScore ToxicityScore::from_probs(double p_nontoxic, double p_toxic) {
  if (!(p_nontoxic >= 0.0) || !(p_toxic >= 0.0)) {
    throw std::invalid_argument("negative or NaN probability");
  }
  const double total = p_nontoxic + p_toxic;
  if (!(total > 0.0) || !std::isfinite(total)) throw std::invalid_argument("degenerate probability pair");
  return {p_toxic / total, p_nontoxic / total};
}

void sort_candidates(std::vector<InfillCandidate>& candidates) {
  std::sort(candidates.begin(), candidates.end(),
            [](const InfillCandidate& a, const InfillCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.token < b.token;
            });
}

void BackendSuite::validate() const {
  if (!classifier) throw BackendError("backend '" + name + "' has no classifier");
  if (!infiller) throw BackendError("backend '" + name + "' has no mask infiller");
  if (!embedder) throw BackendError("backend '" + name + "' has no sentence embedder");
  if (!perplexity) throw BackendError("backend '" + name + "' has no perplexity scorer");
}

ToxicityScore classify(const BackendSuite& suite, const TokenText& text) {
  return classify(suite, std::span<const TokenText>(&text, 1)).front();
}

std::vector<ToxicityScore> classify(const BackendSuite& suite, std::span<const TokenText> texts) {
  if (texts.empty()) return {};
  auto scores = suite.classifier->classify(texts);
  if (scores.size() != texts.size()) {
    throw BackendError("classifier returned " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(texts.size()) + " texts");
  }
  return scores;
}

std::vector<InfillCandidate> fill_mask(const BackendSuite& suite, const TokenText& text,
                                       std::size_t position, std::size_t k) {
  if (position >= text.size()) {
    throw IndexError("mask position " + std::to_string(position) + " out of range for " +
                     std::to_string(text.size()) + " tokens");
  }
  if (k == 0) return {};
  auto candidates = suite.infiller->fill_mask(text, position, k + 1);
  std::erase_if(candidates, [&](const InfillCandidate& c) { return c.token == suite.mask_token; });
  sort_candidates(candidates);
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

std::vector<double> embed(const BackendSuite& suite, const TokenText& text) {
  return embed(suite, std::span<const TokenText>(&text, 1)).front();
}

std::vector<std::vector<double>> embed(const BackendSuite& suite,
                                       std::span<const TokenText> texts) {
  if (texts.empty()) return {};
  auto vectors = suite.embedder->embed(texts);
  if (vectors.size() != texts.size()) throw BackendError("embedder returned wrong batch size");
  return vectors;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double similarity(const BackendSuite& suite, const TokenText& a, const TokenText& b) {
  const TokenText pair[] = {a, b};
  const auto v = embed(suite, pair);
  return cosine(v[0], v[1]);
}

double perplexity(const BackendSuite& suite, const TokenText& text) {
  return perplexity(suite, std::span<const TokenText>(&text, 1)).front();
}

std::vector<double> perplexity(const BackendSuite& suite, std::span<const TokenText> texts) {
  if (texts.empty()) return {};
  auto values = suite.perplexity->perplexity(texts);
  if (values.size() != texts.size()) throw BackendError("perplexity scorer returned wrong batch size");
  return values;
}

std::vector<double> gradient_saliency(const BackendSuite& suite, const TokenText& text,
                                      double alpha, const BaselineSpec& baseline) {
  if (!suite.saliency) throw CapabilityUnavailable("gradient_saliency");
  if (baseline.kind == BaselineSpec::Kind::kTokens && baseline.tokens.size() != text.size()) {
    throw LengthMismatch(text.size(), baseline.tokens.size());
  }
  auto values = suite.saliency->gradient_saliency(text, alpha, baseline);
  if (values.size() != text.size()) {
    throw BackendError("saliency length " + std::to_string(values.size()) + " != " +
                       std::to_string(text.size()));
  }
  return values;
}

std::vector<std::vector<double>> attention_weights(const BackendSuite& suite,
                                                   const TokenText& text) {
  if (!suite.attention) throw CapabilityUnavailable("attention");
  auto heads = suite.attention->attention_weights(text);
  if (heads.empty()) throw BackendError("attention provider returned no heads");
  for (const auto& row : heads) {
    if (row.size() != text.size()) throw BackendError("attention row length mismatch");
  }
  return heads;
}

TokenText fully_masked(const BackendSuite& suite, const TokenText& text) {
  return TokenText::from_tokens(std::vector<std::string>(text.size(), suite.mask_token));
}

}  // namespace detox
