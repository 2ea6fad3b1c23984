#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace detox {

/// A raw string together with its word-level tokens.
///
/// Tokens are produced by splitting on whitespace and detaching leading and
/// trailing ASCII punctuation as single-character tokens. Interior
/// punctuation stays attached ("F**k", "don't"), and bracketed special
/// tokens such as "[MASK]" are kept whole. Casing is preserved.
class TokenText {
 public:
  /// Tokenizes `raw`. Throws EmptyText for empty or whitespace-only input.
  static TokenText from_raw(std::string_view raw);
  /// Builds a text from tokens; the raw string is their detokenization.
  /// Throws EmptyText if `tokens` is empty and std::invalid_argument if a
  /// token does not re-tokenize to itself.
  static TokenText from_tokens(std::vector<std::string> tokens);

  const std::string& raw() const noexcept { return raw_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }

  /// Copy with the token at `position` replaced. Throws IndexError.
  TokenText with_token(std::size_t position, std::string token) const;

  friend bool operator==(const TokenText& a, const TokenText& b) { return a.tokens_ == b.tokens_; }

 private:
  TokenText(std::string raw, std::vector<std::string> tokens)
      : raw_(std::move(raw)), tokens_(std::move(tokens)) {}

  std::string raw_;
  std::vector<std::string> tokens_;
};

struct Edit {
  std::size_t position = 0;
  std::string original;
  std::string replacement;

  friend bool operator==(const Edit&, const Edit&) = default;
};

/// Substitutions at unique, strictly increasing positions.
using EditSet = std::vector<Edit>;

TokenText tokenize(std::string_view raw);
std::vector<std::string> split_tokens(std::string_view raw);
std::string detokenize(const std::vector<std::string>& tokens);

/// True if `token` tokenizes to exactly itself.
bool is_single_token(std::string_view token);

std::size_t word_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);
std::size_t word_levenshtein(const TokenText& a, const TokenText& b);

/// 100 * (1 - levenshtein / max(len a, len b)).
double sparsity_percent(const TokenText& a, const TokenText& b);

/// Positions where equal-length texts differ. Throws LengthMismatch.
EditSet diff(const TokenText& a, const TokenText& b);

/// Applies substitutions to `text`. Throws IndexError for out-of-range
/// positions and std::invalid_argument if an edit's original token does not
/// match the text.
TokenText apply(const TokenText& text, const EditSet& edits);

}  // namespace detox
