#include "detox/attribution.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "detox/errors.hpp"
#include "detox/random.hpp"

namespace detox {
namespace {

using Coalition = std::vector<char>;

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

TokenText masked_text(const BackendSuite& suite, const TokenText& x, const Coalition& present) {
  auto tokens = x.tokens();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!present[i]) tokens[i] = suite.mask_token;
  }
  return TokenText::from_tokens(std::move(tokens));
}

struct WeightedCoalition {
  Coalition present;
  double weight;
};

// Weighted least squares with the efficiency constraint
// sum(phi) = v(full) - v(empty) eliminated through the last coordinate.
std::vector<double> solve_constrained(const std::vector<WeightedCoalition>& rows,
                                      const std::vector<double>& values, double v_empty,
                                      double v_full, std::size_t d, double ridge) {
  const double delta = v_full - v_empty;
  const auto m = static_cast<Eigen::Index>(d - 1);
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd a(m);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& z = rows[r].present;
    const double last = z[d - 1] ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < m; ++j) a(j) = (z[static_cast<std::size_t>(j)] ? 1.0 : 0.0) - last;
    const double y = values[r] - v_empty - last * delta;
    normal.noalias() += rows[r].weight * a * a.transpose();
    rhs.noalias() += rows[r].weight * y * a;
  }
  normal.diagonal().array() += ridge;
  const Eigen::VectorXd beta = normal.ldlt().solve(rhs);
  std::vector<double> phi(d);
  double partial = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    phi[static_cast<std::size_t>(j)] = beta(j);
    partial += beta(j);
  }
  phi[d - 1] = delta - partial;
  return phi;
}

std::vector<WeightedCoalition> enumerate_coalitions(std::size_t d) {
  std::vector<WeightedCoalition> rows;
  const std::uint64_t total = std::uint64_t{1} << d;
  rows.reserve(total - 2);
  for (std::uint64_t mask = 1; mask + 1 < total; ++mask) {
    Coalition z(d);
    std::size_t size = 0;
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = static_cast<char>((mask >> i) & 1U);
      size += z[i];
    }
    rows.push_back({std::move(z), shapley_kernel_weight(d, size)});
  }
  return rows;
}

// Coalition sizes are drawn with probability proportional to the total
// kernel mass of each size, then members uniformly; each draw has weight 1.
std::vector<WeightedCoalition> sample_coalitions(std::size_t d, std::size_t n, std::uint64_t seed) {
  std::vector<double> size_mass(d, 0.0);
  double total = 0.0;
  for (std::size_t s = 1; s < d; ++s) {
    size_mass[s] = binomial(d, s) * shapley_kernel_weight(d, s);
    total += size_mass[s];
  }
  SplitMix64 rng(seed);
  std::map<Coalition, double> counts;
  std::vector<std::size_t> order(d);
  for (std::size_t draw = 0; draw < n; ++draw) {
    double u = rng.uniform() * total;
    std::size_t size = d - 1;
    for (std::size_t s = 1; s < d; ++s) {
      if (u < size_mass[s]) {
        size = s;
        break;
      }
      u -= size_mass[s];
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    Coalition z(d, 0);
    for (std::size_t i = 0; i < size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(d - i));
      std::swap(order[i], order[j]);
      z[order[i]] = 1;
    }
    counts[z] += 1.0;
  }
  std::vector<WeightedCoalition> rows;
  rows.reserve(counts.size());
  for (auto& [z, c] : counts) rows.push_back({z, c});
  return rows;
}

}  // namespace

std::string_view to_string(AttributionMethod method) {
  switch (method) {
    case AttributionMethod::kKernelShap: return "kshap";
    case AttributionMethod::kIntegratedGradients: return "ig";
    case AttributionMethod::kAttention: return "attention";
    case AttributionMethod::kCfi: return "cfi";
  }
  return "unknown";
}

std::vector<std::size_t> ImportanceVector::ranking() const {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double shapley_kernel_weight(std::size_t d, std::size_t s) {
  if (s == 0 || s >= d) throw std::invalid_argument("kernel weight undefined for empty/full coalition");
  return static_cast<double>(d - 1) /
         (binomial(d, s) * static_cast<double>(s) * static_cast<double>(d - s));
}

ImportanceVector kernel_shap(const BackendSuite& suite, const TokenText& x,
                             const KernelShapOptions& options) {
  const std::size_t d = x.size();
  if (d == 0) throw EmptyText();

  const bool small = d < 63;
  const std::size_t n_samples =
      options.n_samples > 0
          ? options.n_samples
          : (small ? std::min<std::uint64_t>(std::uint64_t{1} << d, kDefaultShapSamples)
                   : kDefaultShapSamples);

  bool exact = false;
  switch (options.mode) {
    case ShapMode::kAuto: exact = small && (std::uint64_t{1} << d) <= n_samples; break;
    case ShapMode::kExact:
      if (d > 20) throw std::invalid_argument("exact KernelSHAP limited to 20 tokens");
      exact = true;
      break;
    case ShapMode::kSampled: exact = false; break;
  }

  ImportanceVector result;
  result.method = AttributionMethod::kKernelShap;
  result.meta = {{"target", "toxic"},
                 {"samples", std::to_string(n_samples)},
                 {"seed", std::to_string(options.seed)},
                 {"mode", exact || d == 1 ? "exact" : "sampled"}};

  const TokenText empty = fully_masked(suite, x);
  const TokenText both[] = {x, empty};
  const auto base = classify(suite, both);
  const double v_full = base[0].p_toxic;
  const double v_empty = base[1].p_toxic;
  if (d == 1) {
    result.scores = {v_full - v_empty};
    return result;
  }

  auto rows = exact ? enumerate_coalitions(d) : sample_coalitions(d, n_samples, options.seed);
  std::vector<TokenText> texts;
  texts.reserve(rows.size());
  for (const auto& row : rows) texts.push_back(masked_text(suite, x, row.present));
  const auto scores = classify(suite, texts);
  std::vector<double> values(scores.size());
  std::transform(scores.begin(), scores.end(), values.begin(),
                 [](const ToxicityScore& s) { return s.p_toxic; });

  // Full enumeration gives a well-posed system; the ridge only guards
  // sampled designs that miss some coalition sizes.
  result.scores = solve_constrained(rows, values, v_empty, v_full, d, exact ? 0.0 : options.ridge);
  return result;
}

ImportanceVector integrated_gradients(const BackendSuite& suite, const TokenText& x,
                                      std::size_t steps, const BaselineSpec& baseline) {
  if (steps == 0) throw std::invalid_argument("IG needs at least one step");
  if (!suite.saliency) throw CapabilityUnavailable("gradient_saliency");
  std::vector<double> total(x.size(), 0.0);
  for (std::size_t m = 1; m <= steps; ++m) {
    const double alpha = static_cast<double>(m) / static_cast<double>(steps);
    const auto s = gradient_saliency(suite, x, alpha, baseline);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += s[i];
  }
  ImportanceVector result;
  result.method = AttributionMethod::kIntegratedGradients;
  result.scores.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    result.scores[i] = -total[i] / static_cast<double>(steps);
  }
  result.meta = {{"target", "toxic"},
                 {"steps", std::to_string(steps)},
                 {"baseline", baseline.kind == BaselineSpec::Kind::kMask ? "mask" : "tokens"}};
  return result;
}

ImportanceVector self_attention_importance(const BackendSuite& suite, const TokenText& x) {
  const auto heads = attention_weights(suite, x);
  ImportanceVector result;
  result.method = AttributionMethod::kAttention;
  result.scores.assign(x.size(), 0.0);
  for (const auto& row : heads) {
    for (std::size_t i = 0; i < row.size(); ++i) result.scores[i] += row[i];
  }
  for (auto& v : result.scores) v /= static_cast<double>(heads.size());
  result.meta = {{"heads", std::to_string(heads.size())}};
  return result;
}

ImportanceVector cfi(const BackendSuite& suite, const TokenText& x, const TokenText& x_cf,
                     std::size_t steps) {
  if (x.size() != x_cf.size()) throw LengthMismatch(x.size(), x_cf.size());
  if (x == x_cf) throw IdenticalTexts();
  if (steps == 0) throw std::invalid_argument("CFI needs at least one step");
  if (!suite.saliency) throw CapabilityUnavailable("gradient_saliency");

  const auto baseline = BaselineSpec::instance(x);
  std::vector<double> total(x.size(), 0.0);
  for (std::size_t m = 1; m <= steps; ++m) {
    const double alpha = static_cast<double>(m) / static_cast<double>(steps);
    const auto s = gradient_saliency(suite, x_cf, alpha, baseline);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += s[i];
  }
  ImportanceVector result;
  result.method = AttributionMethod::kCfi;
  result.scores.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    result.scores[i] = x[i] == x_cf[i] ? 0.0 : total[i] / static_cast<double>(steps);
  }
  result.meta = {{"target", "non-toxic"}, {"steps", std::to_string(steps)}, {"baseline", "instance"}};
  return result;
}

}  // namespace detox
