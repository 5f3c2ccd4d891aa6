#ifndef CCIL_NN_TRAIN_HPP_
#define CCIL_NN_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccil/common.hpp"
#include "ccil/nn/mlp.hpp"
#include "ccil/nn/spectral.hpp"

namespace ccil::nn {

enum class Optimizer { Sgd, Adam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

// Identical config + identical data -> bit-identical trained weights.
// Everything stochastic in training (init, shuffling) derives from `seed`.
struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::Adam;

  void validate() const;
};

// Per-sample loss: fills grad with dL/d(prediction) and returns L.
using LossFn = std::function<double(const Vec& pred, const Vec& target, Vec& grad)>;

LossFn squared_error_loss();

struct FitResult {
  double final_loss = 0.0;  // mean weighted loss over the last epoch
  int steps = 0;
};

// Mini-batch training of `net` on column-per-sample inputs/targets. When the
// constraint is bounded the weights are re-projected after every optimizer
// step and tightened with exact norms at the end, so the per-layer cap holds
// on the returned network. Throws TrainingError on non-finite loss or weights.
FitResult fit(Mlp& net, const Mat& inputs, const Mat& targets,
              const std::vector<double>& sample_weights, const TrainConfig& cfg,
              const SpectralConstraint& constraint = SpectralConstraint::unbounded(),
              const LossFn& loss = squared_error_loss());

}  // namespace ccil::nn

#endif  // CCIL_NN_TRAIN_HPP_
