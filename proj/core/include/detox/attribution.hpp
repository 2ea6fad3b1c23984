#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "detox/backend.hpp"
#include "detox/text.hpp"

namespace detox {

enum class AttributionMethod { kKernelShap, kIntegratedGradients, kAttention, kCfi };

std::string_view to_string(AttributionMethod method);

/// Per-token scores explaining one prediction (or, for kCfi, the change
/// between a text and its counterfactual).
struct ImportanceVector {
  std::vector<double> scores;
  AttributionMethod method = AttributionMethod::kKernelShap;
  std::map<std::string, std::string> meta;

  std::size_t size() const noexcept { return scores.size(); }
  /// Positions by descending score; equal scores keep ascending position.
  std::vector<std::size_t> ranking() const;
};

enum class ShapMode {
  kAuto,     // exact when 2^d <= n_samples
  kExact,    // enumerate every coalition
  kSampled,  // draw n_samples coalitions from the Shapley kernel
};

struct KernelShapOptions {
  /// 0 selects min(2^d, 2048).
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  ShapMode mode = ShapMode::kAuto;
  /// Tikhonov term for sampled fits.
  double ridge = 1e-9;
};

inline constexpr std::size_t kDefaultShapSamples = 2048;
inline constexpr std::size_t kDefaultIgSteps = 32;

/// Shapley kernel weight (d - 1) / (C(d, s) * s * (d - s)) for 0 < s < d.
double shapley_kernel_weight(std::size_t d, std::size_t s);

/// KernelSHAP attribution of the toxic-class probability. Absent tokens are
/// replaced by the suite's mask token.
ImportanceVector kernel_shap(const BackendSuite& suite, const TokenText& x,
                             const KernelShapOptions& options = {});

/// Right-endpoint Riemann approximation of Integrated Gradients for the
/// toxic logit (negated non-toxic saliency).
ImportanceVector integrated_gradients(const BackendSuite& suite, const TokenText& x,
                                      std::size_t steps = kDefaultIgSteps,
                                      const BaselineSpec& baseline = BaselineSpec::mask());

/// Mean over heads of the last-layer CLS attention rows.
ImportanceVector self_attention_importance(const BackendSuite& suite, const TokenText& x);

/// Counterfactual feature importance: IG of the non-toxic logit along the
/// path from `x` to `x_cf`. Unchanged positions score exactly 0.
/// Throws LengthMismatch or IdenticalTexts.
ImportanceVector cfi(const BackendSuite& suite, const TokenText& x, const TokenText& x_cf,
                     std::size_t steps = kDefaultIgSteps);

}  // namespace detox
