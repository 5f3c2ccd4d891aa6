#include "ccil/nn/mlp.hpp"

#include <cmath>

namespace ccil::nn {

namespace {

inline Mat activate(Activation a, const Mat& z) {
  if (a == Activation::Identity) return z;
  return z.array().tanh().matrix();
}

// Derivative evaluated from the pre-activation.
inline Mat activate_prime(Activation a, const Mat& z) {
  if (a == Activation::Identity) return Mat::Ones(z.rows(), z.cols());
  return (1.0 - z.array().tanh().square()).matrix();
}

}  // namespace

std::string to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation id: " + s);
}

Mlp::Mlp(std::vector<Layer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw ConfigError("Mlp: needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.W.rows() != l.b.size()) {
      throw ConfigError("Mlp: bias size does not match layer " +
                        std::to_string(i));
    }
    if (i > 0 && layers_[i - 1].W.rows() != l.W.cols()) {
      throw ConfigError("Mlp: layer " + std::to_string(i) +
                        " input dim does not match previous output dim");
    }
  }
}

Mlp Mlp::init(const std::vector<int>& layer_sizes, Activation activation,
              std::uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("Mlp::init: need at least input and output sizes");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ConfigError("Mlp::init: layer sizes must be positive");
  }
  rng::Engine eng(seed);
  std::vector<Layer> layers;
  layers.reserve(layer_sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int fan_in = layer_sizes[i];
    const int fan_out = layer_sizes[i + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Layer l;
    l.W = Mat(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        l.W(r, c) = rng::uniform(eng, -scale, scale);
      }
    }
    l.b = Vec::Zero(fan_out);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers), activation);
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

void Mlp::check_input(Eigen::Index rows) const {
  if (rows != layers_.front().W.cols()) {
    throw ConfigError("Mlp: input dimension " + std::to_string(rows) +
                      " does not match first layer (" +
                      std::to_string(layers_.front().W.cols()) + ")");
  }
}

Vec Mlp::forward(const Vec& input) const {
  check_input(input.size());
  Vec h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Vec z = layers_[i].W * h + layers_[i].b;
    h = (i + 1 < layers_.size()) ? Vec(activate(activation_, z)) : std::move(z);
  }
  return h;
}

Mat Mlp::forward(const Mat& inputs) const {
  check_input(inputs.rows());
  Mat h = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Mat z = (layers_[i].W * h).colwise() + layers_[i].b;
    h = (i + 1 < layers_.size()) ? activate(activation_, z) : std::move(z);
  }
  return h;
}

Mlp::Trace Mlp::forward_trace(const Mat& inputs) const {
  check_input(inputs.rows());
  Trace t;
  t.pre.reserve(layers_.size());
  t.post.reserve(layers_.size() + 1);
  t.post.push_back(inputs);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Mat z = (layers_[i].W * t.post.back()).colwise() + layers_[i].b;
    t.pre.push_back(z);
    t.post.push_back(i + 1 < layers_.size() ? activate(activation_, z)
                                            : std::move(z));
  }
  return t;
}

void Mlp::Gradients::setZero(const Mlp& like) {
  dW.clear();
  db.clear();
  for (const auto& l : like.layers()) {
    dW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
    db.push_back(Vec::Zero(l.b.size()));
  }
}

Mlp::Gradients& Mlp::Gradients::operator+=(const Gradients& other) {
  for (std::size_t i = 0; i < dW.size(); ++i) {
    dW[i] += other.dW[i];
    db[i] += other.db[i];
  }
  return *this;
}

Mlp::Gradients& Mlp::Gradients::operator*=(double s) {
  for (std::size_t i = 0; i < dW.size(); ++i) {
    dW[i] *= s;
    db[i] *= s;
  }
  return *this;
}

Mlp::Gradients Mlp::backward(const Trace& trace, const Mat& output_grads) const {
  const auto n = layers_.size();
  if (trace.pre.size() != n || output_grads.rows() != output_dim() ||
      output_grads.cols() != trace.post.front().cols()) {
    throw ConfigError("Mlp::backward: trace/gradient shape mismatch");
  }
  Gradients g;
  g.dW.resize(n);
  g.db.resize(n);
  Mat delta = output_grads;  // last layer is linear
  for (std::size_t k = n; k-- > 0;) {
    g.dW[k] = delta * trace.post[k].transpose();
    g.db[k] = delta.rowwise().sum();
    if (k > 0) {
      delta = (layers_[k].W.transpose() * delta)
                  .cwiseProduct(activate_prime(activation_, trace.pre[k - 1]));
    }
  }
  return g;
}

Mat Mlp::jacobian(const Vec& input) const {
  check_input(input.size());
  // J = W_n D_{n-1} W_{n-1} ... D_1 W_1 with D_i = diag(act'(z_i)).
  Vec h = input;
  Mat j = layers_.front().W;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    Vec z = layers_[i].W * h + layers_[i].b;
    Vec d = activate_prime(activation_, z);
    j = layers_[i + 1].W * d.asDiagonal() * j;
    h = activate(activation_, z);
  }
  return j;
}

}  // namespace ccil::nn
