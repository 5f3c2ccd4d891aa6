#include "ccil/nn/train.hpp"

#include <cmath>
#include <numeric>

namespace ccil::nn {

std::string to_string(Optimizer o) {
  return o == Optimizer::Adam ? "adam" : "sgd";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::Adam;
  if (s == "sgd") return Optimizer::Sgd;
  throw ConfigError("unknown optimizer id: " + s);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be positive");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be positive");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("TrainConfig: learning_rate must be positive");
  }
}

LossFn squared_error_loss() {
  return [](const Vec& pred, const Vec& target, Vec& grad) {
    Vec err = pred - target;
    grad = 2.0 * err;
    return err.squaredNorm();
  };
}

namespace {

struct AdamState {
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;
  long t = 0;

  explicit AdamState(const Mlp& net) {
    for (const auto& l : net.layers()) {
      mW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
      vW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
      mb.push_back(Vec::Zero(l.b.size()));
      vb.push_back(Vec::Zero(l.b.size()));
    }
  }

  void step(Mlp& net, const Mlp::Gradients& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      mW[i] = b1 * mW[i] + (1.0 - b1) * g.dW[i];
      vW[i] = b2 * vW[i] + (1.0 - b2) * g.dW[i].cwiseProduct(g.dW[i]);
      layers[i].W -= lr * (mW[i] / c1).cwiseQuotient(
          ((vW[i] / c2).cwiseSqrt().array() + eps).matrix());
      mb[i] = b1 * mb[i] + (1.0 - b1) * g.db[i];
      vb[i] = b2 * vb[i] + (1.0 - b2) * g.db[i].cwiseProduct(g.db[i]);
      layers[i].b -= lr * (mb[i] / c1).cwiseQuotient(
          ((vb[i] / c2).cwiseSqrt().array() + eps).matrix());
    }
  }
};

void sgd_step(Mlp& net, const Mlp::Gradients& g, double lr) {
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].W -= lr * g.dW[i];
    layers[i].b -= lr * g.db[i];
  }
}

// In-place Fisher-Yates; pinned here so the visit order is identical on every
// standard library.
void shuffle_indices(std::vector<int>& idx, rng::Engine& eng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(eng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

FitResult fit(Mlp& net, const Mat& inputs, const Mat& targets,
              const std::vector<double>& sample_weights, const TrainConfig& cfg,
              const SpectralConstraint& constraint, const LossFn& loss) {
  cfg.validate();
  const auto n = inputs.cols();
  if (n == 0) throw InputError("fit: empty training set");
  if (targets.cols() != n) throw ConfigError("fit: inputs/targets size mismatch");
  if (!sample_weights.empty() &&
      sample_weights.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("fit: sample_weights size mismatch");
  }
  if (inputs.rows() != net.input_dim() || targets.rows() != net.output_dim()) {
    throw ConfigError("fit: data dimensions do not match network");
  }

  rng::Engine shuffle_eng(cfg.seed ^ 0x8badf00d5eedull);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  SpectralProjector projector(constraint);
  if (constraint.bounded()) projector.apply(net);

  AdamState adam(net);
  FitResult result;
  Vec grad_col(net.output_dim());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle_eng);
    double epoch_loss = 0.0;
    for (Eigen::Index begin = 0; begin < n; begin += cfg.batch_size) {
      const auto bsz = std::min<Eigen::Index>(cfg.batch_size, n - begin);
      Mat batch_in(inputs.rows(), bsz);
      Mat batch_tgt(targets.rows(), bsz);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        batch_in.col(k) = inputs.col(order[begin + k]);
        batch_tgt.col(k) = targets.col(order[begin + k]);
      }
      const auto trace = net.forward_trace(batch_in);
      Mat out_grads(targets.rows(), bsz);
      double batch_loss = 0.0;
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const double w =
            sample_weights.empty() ? 1.0 : sample_weights[order[begin + k]];
        batch_loss += w * loss(trace.post.back().col(k), batch_tgt.col(k), grad_col);
        out_grads.col(k) = w * grad_col;
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("fit: loss diverged (non-finite) at epoch " +
                            std::to_string(epoch));
      }
      auto grads = net.backward(trace, out_grads);
      grads *= 1.0 / static_cast<double>(bsz);
      if (cfg.optimizer == Optimizer::Adam) {
        adam.step(net, grads, cfg.learning_rate);
      } else {
        sgd_step(net, grads, cfg.learning_rate);
      }
      if (constraint.bounded()) projector.apply(net);
      if (!net.all_finite()) {
        throw TrainingError("fit: weights diverged (non-finite) at epoch " +
                            std::to_string(epoch));
      }
      ++result.steps;
      epoch_loss += batch_loss;
    }
    result.final_loss = epoch_loss / static_cast<double>(n);
  }
  if (constraint.bounded()) projector.finalize(net);
  return result;
}

}  // namespace ccil::nn
