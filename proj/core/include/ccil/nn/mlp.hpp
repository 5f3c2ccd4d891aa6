#ifndef CCIL_NN_MLP_HPP_
#define CCIL_NN_MLP_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ccil/common.hpp"

namespace ccil::nn {

// Hidden-layer nonlinearity. Both choices are 1-Lipschitz, which is what lets
// per-layer spectral caps compose into a network-level Lipschitz bound; tanh
// additionally has a well-defined Jacobian everywhere, so local Lipschitz
// coefficients can be read off the analytic Jacobian at any point.
enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Fully connected network. The activation applies to every layer except the
// last; a single-layer Mlp is therefore an affine map regardless of the
// activation id.
class Mlp {
 public:
  struct Layer {
    Mat W;  // out x in
    Vec b;  // out
  };

  Mlp() = default;
  Mlp(std::vector<Layer> layers, Activation activation);

  // Uniform init scaled by 1/sqrt(fan_in); layer_sizes = {in, h1, ..., out}.
  static Mlp init(const std::vector<int>& layer_sizes, Activation activation,
                  std::uint64_t seed);

  int input_dim() const { return static_cast<int>(layers_.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().W.rows()); }
  int n_layers() const { return static_cast<int>(layers_.size()); }
  Activation activation() const { return activation_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  bool all_finite() const;

  Vec forward(const Vec& input) const;
  // Column-per-sample batch forward.
  Mat forward(const Mat& inputs) const;

  // Cached forward pass for backpropagation. post[0] is the input batch;
  // post[i] the activated output of layer i-1; pre[i] the pre-activation of
  // layer i.
  struct Trace {
    std::vector<Mat> pre;
    std::vector<Mat> post;
  };
  Trace forward_trace(const Mat& inputs) const;

  struct Gradients {
    std::vector<Mat> dW;
    std::vector<Vec> db;

    void setZero(const Mlp& like);
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
  };

  // Gradients of a scalar loss w.r.t. every weight and bias, given
  // dL/d(output) per sample column. Sums over the batch.
  Gradients backward(const Trace& trace, const Mat& output_grads) const;

  // Exact d(output)/d(input) at a point, output_dim x input_dim.
  Mat jacobian(const Vec& input) const;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<Layer> layers_;
  Activation activation_ = Activation::Tanh;
};

}  // namespace ccil::nn

#endif  // CCIL_NN_MLP_HPP_
