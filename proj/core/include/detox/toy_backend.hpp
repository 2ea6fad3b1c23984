#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "detox/backend.hpp"

// Deterministic in-process backends. The classifier is logistic-linear in
// token presence, which makes every attribution analytically checkable.
namespace detox::toy {

class ToyLexicon {
 public:
  ToyLexicon(std::map<std::string, double> weights, double bias = -1.0,
             std::string mask_token = "[MASK]");

  /// Weight of `token`; 0 for unknown tokens and the mask token.
  double weight(const std::string& token) const;
  double bias() const noexcept { return bias_; }
  const std::string& mask_token() const noexcept { return mask_token_; }
  const std::map<std::string, double>& weights() const noexcept { return weights_; }

  /// bias + sum of token weights.
  double logit(const TokenText& text) const;

 private:
  std::map<std::string, double> weights_;
  double bias_;
  std::string mask_token_;
};

class ToyClassifier final : public ToxicityClassifier,
                            public SaliencyProvider,
                            public AttentionProvider {
 public:
  explicit ToyClassifier(ToyLexicon lexicon) : lexicon_(std::move(lexicon)) {}

  std::vector<ToxicityScore> classify(std::span<const TokenText> texts) const override;
  // The model is linear in token presence, so saliency does not depend on
  // alpha: value_i = -(w(t_i) - w(b_i)).
  std::vector<double> gradient_saliency(const TokenText& text, double alpha,
                                        const BaselineSpec& baseline) const override;
  // One pseudo-head: |w_i| / sum |w_j|, uniform when every weight is zero.
  std::vector<std::vector<double>> attention_weights(const TokenText& text) const override;

  const ToyLexicon& lexicon() const noexcept { return lexicon_; }

 private:
  ToyLexicon lexicon_;
};

using ReplacementTable = std::map<std::string, std::vector<InfillCandidate>>;

/// Looks up the masked position's current token in a replacement table,
/// falling back to a global neutral-word list.
class ToyInfiller final : public MaskInfiller {
 public:
  ToyInfiller(ReplacementTable table, std::vector<InfillCandidate> fallback);

  std::vector<InfillCandidate> fill_mask(const TokenText& text, std::size_t position,
                                         std::size_t k) const override;

 private:
  ReplacementTable table_;
  std::vector<InfillCandidate> fallback_;
};

/// A token whose vector leans towards another token's vector.
struct Anchor {
  std::string token;
  double strength = 0.0;  // cosine with the anchor's own vector, in [0, 1]
};
using AnchorMap = std::map<std::string, Anchor>;

inline constexpr double kDefaultAnchorScale = 0.8;

/// Anchors every replacement candidate to the token it replaces with
/// strength `scale * score`; the strongest link wins.
AnchorMap anchors_from_table(const ReplacementTable& table, double scale = kDefaultAnchorScale);

/// Hash-seeded pseudo-random unit vector per token; sentence vector is the
/// re-normalized mean of its token vectors. Anchored tokens mix in their
/// anchor's vector, so infill candidates sit near the words they replace.
class ToyEmbedder final : public SentenceEmbedder {
 public:
  static constexpr std::size_t kDefaultDimension = 64;
  static constexpr std::uint64_t kDefaultSeed = 0x5eed'1e55'ca75'd06bULL;

  explicit ToyEmbedder(std::size_t dimension = kDefaultDimension,
                       std::uint64_t seed = kDefaultSeed, AnchorMap anchors = {});

  std::vector<std::vector<double>> embed(std::span<const TokenText> texts) const override;
  std::vector<double> token_vector(const std::string& token) const;

 private:
  std::vector<double> hashed_vector(const std::string& token) const;

  std::size_t dimension_;
  std::uint64_t seed_;
  AnchorMap anchors_;
};

/// Unigram LM with additive smoothing: p(t) = (c(t) + lambda) / (N + lambda V),
/// V = |table| + 1 (one shared slot for unknown tokens).
class ToyUnigramLM final : public PerplexityScorer {
 public:
  explicit ToyUnigramLM(std::map<std::string, double> counts, double pseudo_count = 1.0);

  std::vector<double> perplexity(std::span<const TokenText> texts) const override;
  double probability(const std::string& token) const;
  std::size_t vocabulary_size() const noexcept { return counts_.size() + 1; }

 private:
  std::map<std::string, double> counts_;
  double pseudo_count_;
  double total_ = 0.0;
};

struct ToySuiteOptions {
  std::string name = "toy";
  std::string lexicon_file = "lexicon.tsv";
  double bias = -1.0;
  bool gradient_saliency = true;
  bool attention = true;
};

/// `token<TAB>value` per line; blank lines and lines starting with '#' are
/// skipped. Throws DataFileError.
std::map<std::string, double> load_weights(const std::filesystem::path& path);
/// `token<TAB>candidate:score,candidate:score,...`. Throws DataFileError.
ReplacementTable load_replacements(const std::filesystem::path& path);

BackendSuite make_suite(ToyLexicon lexicon, ToyInfiller infiller, ToyEmbedder embedder,
                        ToyUnigramLM lm, const ToySuiteOptions& options = {});

/// Loads lexicon, replacements.tsv, fallback.tsv and unigram.tsv from `dir`.
BackendSuite load_suite(const std::filesystem::path& dir, const ToySuiteOptions& options = {});

/// Data directory shipped with the sources.
std::filesystem::path default_data_dir();

}  // namespace detox::toy
