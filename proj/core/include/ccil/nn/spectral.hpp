#ifndef CCIL_NN_SPECTRAL_HPP_
#define CCIL_NN_SPECTRAL_HPP_

#include <limits>
#include <vector>

#include "ccil/common.hpp"
#include "ccil/nn/mlp.hpp"

namespace ccil::nn {

// Tolerance granted on the per-layer cap after projection.
inline constexpr double kSpectralTol = 1e-6;

// Network-level Lipschitz cap K, enforced by rescaling each weight matrix to
// spectral norm at most K^(1/n). With a 1-Lipschitz activation the n capped
// layers then compose to a network Lipschitz constant of at most K (a per-layer
// cap of K^(-n) would instead shrink the bound as depth grows, which defeats
// the point of K being the desired network constant).
struct SpectralConstraint {
  double cap = std::numeric_limits<double>::infinity();
  int power_iters = 20;             // projection during training
  std::vector<int> applies_to;      // layer indices; empty = all layers

  bool bounded() const { return std::isfinite(cap); }
  // Per-layer cap K^(1/n) for an n-layer network.
  double layer_cap(int n_layers) const;

  static SpectralConstraint unbounded() { return {}; }
  static SpectralConstraint with_cap(double k, int iters = 20);
};

// Power-iteration iterations used when a norm is reported rather than used
// inside the training loop.
inline constexpr int kMeasureIters = 100;

// Largest-singular-value estimate by power iteration on W^T W from a fixed
// deterministic start vector. The estimate is monotonically non-decreasing in
// power_iters and converges to the true norm from below. Zero matrix -> 0.
double spectral_norm(const Mat& w, int power_iters = kMeasureIters);

// Rescale every constrained layer so its spectral norm is at most
// cap^(1/n_layers); layers already under the cap are left untouched.
Mlp spectral_project(Mlp model, const SpectralConstraint& constraint);

// Stateful projector for training loops: keeps a warm-started power-iteration
// vector per layer, so few iterations per step suffice. finalize() re-projects
// with exact (SVD) norms to land strictly under the cap.
class SpectralProjector {
 public:
  explicit SpectralProjector(SpectralConstraint constraint)
      : constraint_(constraint) {}

  const SpectralConstraint& constraint() const { return constraint_; }

  void apply(Mlp& model);
  void finalize(Mlp& model);

 private:
  bool constrained(int layer_index) const;

  SpectralConstraint constraint_;
  std::vector<Vec> warm_;  // per-layer right singular vector estimate
};

}  // namespace ccil::nn

#endif  // CCIL_NN_SPECTRAL_HPP_
