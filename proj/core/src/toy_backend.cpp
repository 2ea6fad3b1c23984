#include "detox/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "detox/errors.hpp"
#include "detox/random.hpp"

namespace detox::toy {
namespace {

double parse_double(std::string_view s, const std::filesystem::path& path, int line) {
  // strtod handles the full decimal/exponent grammar; from_chars for double
  // is not available on every toolchain we target.
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size() || !std::isfinite(v)) {
    throw DataFileError(path.string() + ":" + std::to_string(line) + ": bad number '" + buf + "'");
  }
  return v;
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataFileError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataFileError(path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>value");
    }
    fn(std::string_view(line).substr(0, tab), std::string_view(line).substr(tab + 1), lineno);
  }
}

}  // namespace

ToyLexicon::ToyLexicon(std::map<std::string, double> weights, double bias, std::string mask_token)
    : weights_(std::move(weights)), bias_(bias), mask_token_(std::move(mask_token)) {
  if (const auto it = weights_.find(mask_token_); it != weights_.end()) {
    if (it->second != 0.0) throw std::invalid_argument("mask token must have weight 0");
    weights_.erase(it);
  }
}

double ToyLexicon::weight(const std::string& token) const {
  const auto it = weights_.find(token);
  return it == weights_.end() ? 0.0 : it->second;
}

double ToyLexicon::logit(const TokenText& text) const {
  double z = bias_;
  for (const auto& t : text.tokens()) z += weight(t);
  return z;
}

std::vector<ToxicityScore> ToyClassifier::classify(std::span<const TokenText> texts) const {
  std::vector<ToxicityScore> out;
  out.reserve(texts.size());
  for (const auto& text : texts) out.push_back(ToxicityScore::from_logit(lexicon_.logit(text)));
  return out;
}

std::vector<double> ToyClassifier::gradient_saliency(const TokenText& text, double /*alpha*/,
                                                     const BaselineSpec& baseline) const {
  std::vector<double> out(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const double base = baseline.kind == BaselineSpec::Kind::kMask
                            ? 0.0
                            : lexicon_.weight(baseline.tokens.at(i));
    // Non-toxic logit is the negated toxic logit.
    out[i] = -(lexicon_.weight(text[i]) - base);
  }
  return out;
}

std::vector<std::vector<double>> ToyClassifier::attention_weights(const TokenText& text) const {
  std::vector<double> row(text.size());
  double total = 0.0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    row[i] = std::abs(lexicon_.weight(text[i]));
    total += row[i];
  }
  for (auto& v : row) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(row.size());
  return {std::move(row)};
}

ToyInfiller::ToyInfiller(ReplacementTable table, std::vector<InfillCandidate> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {
  for (auto& [token, candidates] : table_) sort_candidates(candidates);
  sort_candidates(fallback_);
}

std::vector<InfillCandidate> ToyInfiller::fill_mask(const TokenText& text, std::size_t position,
                                                    std::size_t k) const {
  if (position >= text.size()) throw IndexError("mask position out of range");
  const auto it = table_.find(text[position]);
  const auto& source = it == table_.end() ? fallback_ : it->second;
  const auto n = std::min(k, source.size());
  return {source.begin(), source.begin() + static_cast<std::ptrdiff_t>(n)};
}

AnchorMap anchors_from_table(const ReplacementTable& table, double scale) {
  AnchorMap anchors;
  for (const auto& [source, candidates] : table) {
    for (const auto& c : candidates) {
      const double strength = std::clamp(scale * c.score, 0.0, 1.0);
      if (c.token == source || strength <= 0.0) continue;
      const auto it = anchors.find(c.token);
      if (it == anchors.end() || strength > it->second.strength) anchors[c.token] = {source, strength};
    }
  }
  return anchors;
}

ToyEmbedder::ToyEmbedder(std::size_t dimension, std::uint64_t seed, AnchorMap anchors)
    : dimension_(dimension), seed_(seed), anchors_(std::move(anchors)) {
  if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
  for (const auto& [token, anchor] : anchors_) {
    if (!(anchor.strength >= 0.0 && anchor.strength <= 1.0)) {
      throw std::invalid_argument("anchor strength for '" + token + "' outside [0, 1]");
    }
  }
}

std::vector<double> ToyEmbedder::token_vector(const std::string& token) const {
  auto v = hashed_vector(token);
  const auto it = anchors_.find(token);
  if (it == anchors_.end()) return v;
  // Not exactly `strength` after renormalization since the two hashed
  // vectors are only nearly orthogonal.
  const double r = it->second.strength;
  const double q = std::sqrt(1.0 - r * r);
  const auto a = hashed_vector(it->second.token);
  double norm = 0.0;
  for (std::size_t i = 0; i < dimension_; ++i) {
    v[i] = r * a[i] + q * v[i];
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<double> ToyEmbedder::hashed_vector(const std::string& token) const {
  SplitMix64 rng(fnv1a64(token) ^ seed_);
  std::vector<double> v(dimension_);
  double norm = 0.0;
  for (auto& x : v) {
    x = 2.0 * rng.uniform() - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> ToyEmbedder::embed(std::span<const TokenText> texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    if (text.size() == 0) throw EmptyText();
    std::vector<double> mean(dimension_, 0.0);
    for (const auto& t : text.tokens()) {
      const auto v = token_vector(t);
      for (std::size_t i = 0; i < dimension_; ++i) mean[i] += v[i];
    }
    double norm = 0.0;
    for (const double x : mean) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (auto& x : mean) x /= norm;
    }
    out.push_back(std::move(mean));
  }
  return out;
}

ToyUnigramLM::ToyUnigramLM(std::map<std::string, double> counts, double pseudo_count)
    : counts_(std::move(counts)), pseudo_count_(pseudo_count) {
  if (pseudo_count_ < 0.0) throw std::invalid_argument("pseudo count must be non-negative");
  for (const auto& [token, c] : counts_) {
    if (c < 0.0) throw std::invalid_argument("negative unigram count for '" + token + "'");
    total_ += c;
  }
  if (total_ + pseudo_count_ * static_cast<double>(vocabulary_size()) <= 0.0) {
    throw std::invalid_argument("unigram model has no probability mass");
  }
}

double ToyUnigramLM::probability(const std::string& token) const {
  const auto it = counts_.find(token);
  const double c = it == counts_.end() ? 0.0 : it->second;
  return (c + pseudo_count_) / (total_ + pseudo_count_ * static_cast<double>(vocabulary_size()));
}

std::vector<double> ToyUnigramLM::perplexity(std::span<const TokenText> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    if (text.size() == 0) throw EmptyText();
    double nll = 0.0;
    for (const auto& t : text.tokens()) nll -= std::log(probability(t));
    out.push_back(std::exp(nll / static_cast<double>(text.size())));
  }
  return out;
}

std::map<std::string, double> load_weights(const std::filesystem::path& path) {
  std::map<std::string, double> out;
  for_each_record(path, [&](std::string_view token, std::string_view value, int line) {
    out[std::string(token)] = parse_double(value, path, line);
  });
  return out;
}

ReplacementTable load_replacements(const std::filesystem::path& path) {
  ReplacementTable out;
  for_each_record(path, [&](std::string_view token, std::string_view value, int line) {
    auto& list = out[std::string(token)];
    std::size_t start = 0;
    while (start <= value.size()) {
      const auto comma = std::min(value.find(',', start), value.size());
      const auto item = value.substr(start, comma - start);
      const auto colon = item.rfind(':');
      if (colon == std::string_view::npos || colon == 0) {
        throw DataFileError(path.string() + ":" + std::to_string(line) +
                            ": expected candidate:score");
      }
      list.push_back({std::string(item.substr(0, colon)),
                      parse_double(item.substr(colon + 1), path, line)});
      start = comma + 1;
    }
  });
  return out;
}

BackendSuite make_suite(ToyLexicon lexicon, ToyInfiller infiller, ToyEmbedder embedder,
                        ToyUnigramLM lm, const ToySuiteOptions& options) {
  BackendSuite suite;
  suite.name = options.name;
  suite.mask_token = lexicon.mask_token();
  auto classifier = std::make_shared<const ToyClassifier>(std::move(lexicon));
  suite.classifier = classifier;
  if (options.gradient_saliency) suite.saliency = classifier;
  if (options.attention) suite.attention = classifier;
  suite.infiller = std::make_shared<const ToyInfiller>(std::move(infiller));
  suite.embedder = std::make_shared<const ToyEmbedder>(std::move(embedder));
  suite.perplexity = std::make_shared<const ToyUnigramLM>(std::move(lm));
  return suite;
}

BackendSuite load_suite(const std::filesystem::path& dir, const ToySuiteOptions& options) {
  ToyLexicon lexicon(load_weights(dir / options.lexicon_file), options.bias);
  std::vector<InfillCandidate> fallback;
  for (const auto& [token, score] : load_weights(dir / "fallback.tsv")) {
    fallback.push_back({token, score});
  }
  auto table = load_replacements(dir / "replacements.tsv");
  ToyEmbedder embedder(ToyEmbedder::kDefaultDimension, ToyEmbedder::kDefaultSeed,
                       anchors_from_table(table));
  ToyInfiller infiller(std::move(table), std::move(fallback));
  ToyUnigramLM lm(load_weights(dir / "unigram.tsv"));
  return make_suite(std::move(lexicon), std::move(infiller), std::move(embedder), std::move(lm), options);
}

std::filesystem::path default_data_dir() {
#ifdef DETOX_DEFAULT_TOY_DATA_DIR
  return DETOX_DEFAULT_TOY_DATA_DIR;
#else
  return "data/toy";
#endif
}

}  // namespace detox::toy
