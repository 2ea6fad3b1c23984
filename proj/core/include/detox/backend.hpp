#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "detox/text.hpp"

namespace detox {

/// Binary toxicity probabilities. p_toxic + p_nontoxic == 1.
struct ToxicityScore {
  double p_toxic = 0.0;
  double p_nontoxic = 1.0;

  bool is_toxic() const noexcept { return p_toxic > 0.5; }
  /// log(p_toxic / p_nontoxic).
  double toxic_logit() const;

  static ToxicityScore from_logit(double toxic_logit);
  /// Renormalizes the pair to sum to one. Throws std::invalid_argument for
  /// negative or all-zero inputs.
  static ToxicityScore from_probs(double p_nontoxic, double p_toxic);
};

struct InfillCandidate {
  std::string token;
  double score = 0.0;

  friend bool operator==(const InfillCandidate&, const InfillCandidate&) = default;
};

/// Sorts by score descending, then token ascending.
void sort_candidates(std::vector<InfillCandidate>& candidates);

/// Reference point for gradient-based attribution: every position masked,
/// or an explicit token sequence of the same length (e.g. the original
/// instance when explaining a counterfactual).
struct BaselineSpec {
  enum class Kind { kMask, kTokens };
  Kind kind = Kind::kMask;
  std::vector<std::string> tokens;

  static BaselineSpec mask() { return {}; }
  static BaselineSpec instance(const TokenText& text) { return {Kind::kTokens, text.tokens()}; }
};

// Capability interfaces. Implementations must tolerate concurrent const calls.

class ToxicityClassifier {
 public:
  virtual ~ToxicityClassifier() = default;
  virtual std::vector<ToxicityScore> classify(std::span<const TokenText> texts) const = 0;
};

class MaskInfiller {
 public:
  virtual ~MaskInfiller() = default;
  /// Candidates for the token at `position`; at most `k` entries.
  virtual std::vector<InfillCandidate> fill_mask(const TokenText& text, std::size_t position,
                                                 std::size_t k) const = 0;
};

class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::vector<std::vector<double>> embed(std::span<const TokenText> texts) const = 0;
};

class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  virtual std::vector<double> perplexity(std::span<const TokenText> texts) const = 0;
};

/// Per-token (dF/de_i at the alpha-interpolated point) . (e_i - baseline_i),
/// with F the non-toxic class logit.
class SaliencyProvider {
 public:
  virtual ~SaliencyProvider() = default;
  virtual std::vector<double> gradient_saliency(const TokenText& text, double alpha,
                                                const BaselineSpec& baseline) const = 0;
};

/// Last-layer CLS attention rows, one per head, each of length d.
class AttentionProvider {
 public:
  virtual ~AttentionProvider() = default;
  virtual std::vector<std::vector<double>> attention_weights(const TokenText& text) const = 0;
};

struct Capabilities {
  bool gradient_saliency = false;
  bool attention = false;
};

/// The model capabilities consumed by the engine. The optional providers
/// are null when the backend does not offer them, so the capability flags
/// cannot disagree with what is callable.
struct BackendSuite {
  std::string name;
  std::string mask_token = "[MASK]";
  std::shared_ptr<const ToxicityClassifier> classifier;
  std::shared_ptr<const MaskInfiller> infiller;
  std::shared_ptr<const SentenceEmbedder> embedder;
  std::shared_ptr<const PerplexityScorer> perplexity;
  std::shared_ptr<const SaliencyProvider> saliency;
  std::shared_ptr<const AttentionProvider> attention;

  Capabilities capabilities() const noexcept {
    return {saliency != nullptr, attention != nullptr};
  }
  /// Throws BackendError if a mandatory capability is missing.
  void validate() const;
};

ToxicityScore classify(const BackendSuite& suite, const TokenText& text);
std::vector<ToxicityScore> classify(const BackendSuite& suite, std::span<const TokenText> texts);

/// Sorted candidates for `position`, never containing the mask token.
/// Throws IndexError if position >= d.
std::vector<InfillCandidate> fill_mask(const BackendSuite& suite, const TokenText& text,
                                       std::size_t position, std::size_t k);

/// Unit-length sentence embedding.
std::vector<double> embed(const BackendSuite& suite, const TokenText& text);
std::vector<std::vector<double>> embed(const BackendSuite& suite, std::span<const TokenText> texts);

/// Cosine similarity of two vectors, clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);
double similarity(const BackendSuite& suite, const TokenText& a, const TokenText& b);
/// (1 - s) / 2.
inline double semantic_distance(double similarity) { return 0.5 * (1.0 - similarity); }

double perplexity(const BackendSuite& suite, const TokenText& text);
std::vector<double> perplexity(const BackendSuite& suite, std::span<const TokenText> texts);

/// Throws CapabilityUnavailable when the suite has no saliency provider.
std::vector<double> gradient_saliency(const BackendSuite& suite, const TokenText& text,
                                      double alpha, const BaselineSpec& baseline);
/// Throws CapabilityUnavailable when the suite has no attention provider.
std::vector<std::vector<double>> attention_weights(const BackendSuite& suite,
                                                   const TokenText& text);

/// Text with every position replaced by the suite's mask token.
TokenText fully_masked(const BackendSuite& suite, const TokenText& text);

}  // namespace detox
