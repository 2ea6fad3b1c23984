#include "detox/text.hpp"

#include <algorithm>
#include <stdexcept>

#include "detox/errors.hpp"

namespace detox {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII punctuation only; bytes >= 0x80 belong to words.
bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 0x21 && u <= 0x2f) || (u >= 0x3a && u <= 0x40) || (u >= 0x5b && u <= 0x60) ||
         (u >= 0x7b && u <= 0x7e);
}

bool attaches_left(const std::string& token) {
  static constexpr std::string_view kClosing = ".,!?;:)]}%";
  return token.size() == 1 && kClosing.find(token[0]) != std::string_view::npos;
}

// Length of a bracketed special token such as "[MASK]" at the start of
// `chunk`, or 0.
std::size_t special_prefix(std::string_view chunk) {
  if (chunk.size() < 3 || chunk[0] != '[') return 0;
  std::size_t i = 1;
  while (i < chunk.size()) {
    const char c = chunk[i];
    const bool word = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
    if (!word) break;
    ++i;
  }
  if (i == 1 || i >= chunk.size() || chunk[i] != ']') return 0;
  return i + 1;
}

void split_chunk(std::string_view chunk, std::vector<std::string>& out) {
  while (!chunk.empty()) {
    if (const auto n = special_prefix(chunk); n > 0) {
      out.emplace_back(chunk.substr(0, n));
      chunk.remove_prefix(n);
    } else if (is_punct(chunk.front())) {
      out.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    } else {
      break;
    }
  }
  if (chunk.empty()) return;
  std::size_t trail = chunk.size();
  while (trail > 0 && is_punct(chunk[trail - 1])) --trail;
  out.emplace_back(chunk.substr(0, trail));
  for (std::size_t i = trail; i < chunk.size(); ++i) out.emplace_back(1, chunk[i]);
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view raw) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && is_space(raw[i])) ++i;
    std::size_t j = i;
    while (j < raw.size() && !is_space(raw[j])) ++j;
    if (j > i) split_chunk(raw.substr(i, j - i), tokens);
    i = j;
  }
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !attaches_left(tokens[i])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool is_single_token(std::string_view token) {
  const auto parts = split_tokens(token);
  return parts.size() == 1 && parts.front() == token;
}

TokenText TokenText::from_raw(std::string_view raw) {
  auto tokens = split_tokens(raw);
  if (tokens.empty()) throw EmptyText();
  return TokenText(std::string(raw), std::move(tokens));
}

TokenText TokenText::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty()) throw EmptyText();
  for (const auto& t : tokens) {
    if (!is_single_token(t)) throw std::invalid_argument("not a single word token: '" + t + "'");
  }
  auto raw = detokenize(tokens);
  return TokenText(std::move(raw), std::move(tokens));
}

TokenText TokenText::with_token(std::size_t position, std::string token) const {
  if (position >= tokens_.size()) {
    throw IndexError("position " + std::to_string(position) + " out of range for " +
                     std::to_string(tokens_.size()) + " tokens");
  }
  auto tokens = tokens_;
  tokens[position] = std::move(token);
  return from_tokens(std::move(tokens));
}

TokenText tokenize(std::string_view raw) { return TokenText::from_raw(raw); }

std::size_t word_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  // Two-row DP over token lists.
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t word_levenshtein(const TokenText& a, const TokenText& b) {
  return word_levenshtein(a.tokens(), b.tokens());
}

double sparsity_percent(const TokenText& a, const TokenText& b) {
  const auto denom = std::max(a.size(), b.size());
  if (denom == 0) return 100.0;
  const double dist = static_cast<double>(word_levenshtein(a, b));
  return 100.0 * (1.0 - dist / static_cast<double>(denom));
}

EditSet diff(const TokenText& a, const TokenText& b) {
  if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
  EditSet edits;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) edits.push_back({i, a[i], b[i]});
  }
  return edits;
}

TokenText apply(const TokenText& text, const EditSet& edits) {
  auto tokens = text.tokens();
  for (const auto& e : edits) {
    if (e.position >= tokens.size()) {
      throw IndexError("edit position " + std::to_string(e.position) + " out of range");
    }
    if (tokens[e.position] != e.original) {
      throw std::invalid_argument("edit at position " + std::to_string(e.position) +
                                  " expects '" + e.original + "', found '" +
                                  tokens[e.position] + "'");
    }
    tokens[e.position] = e.replacement;
  }
  return TokenText::from_tokens(std::move(tokens));
}

}  // namespace detox
