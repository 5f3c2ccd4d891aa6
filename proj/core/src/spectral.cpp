#include "ccil/nn/spectral.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace ccil::nn {

namespace {

Vec start_vector(Eigen::Index n) {
  // Fixed pseudo-random direction; generic w.r.t. any data-derived matrix.
  rng::Engine eng(0x9e3779b97f4a7c15ull);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng::normal(eng);
  v.normalize();
  return v;
}

double exact_norm(const Mat& w) {
  return Eigen::JacobiSVD<Mat>(w).singularValues()(0);
}

// One Gram iteration; returns the current norm estimate sqrt(v' W'W v).
double gram_step(const Mat& w, Vec& v) {
  Vec u = w * v;
  Vec next = w.transpose() * u;
  const double nn = next.norm();
  if (nn > 0.0) v = next / nn;
  return u.norm();
}

}  // namespace

double SpectralConstraint::layer_cap(int n_layers) const {
  if (!bounded()) return std::numeric_limits<double>::infinity();
  if (cap <= 0.0) throw ConfigError("SpectralConstraint: cap must be positive");
  return std::pow(cap, 1.0 / static_cast<double>(n_layers));
}

SpectralConstraint SpectralConstraint::with_cap(double k, int iters) {
  if (k <= 0.0) throw ConfigError("SpectralConstraint: cap must be positive");
  if (iters < 1) throw ConfigError("SpectralConstraint: power_iters >= 1");
  SpectralConstraint c;
  c.cap = k;
  c.power_iters = iters;
  return c;
}

double spectral_norm(const Mat& w, int power_iters) {
  if (power_iters < 1) throw ConfigError("spectral_norm: power_iters >= 1");
  if (w.size() == 0 || w.isZero(0.0)) return 0.0;
  Vec v = start_vector(w.cols());
  double est = 0.0;
  for (int i = 0; i < power_iters; ++i) {
    const double next = gram_step(w, v);
    if (i > 0 && next - est <= 1e-13 * std::max(1.0, est)) return next;
    est = next;
  }
  return est;
}

bool SpectralProjector::constrained(int layer_index) const {
  if (constraint_.applies_to.empty()) return true;
  return std::find(constraint_.applies_to.begin(), constraint_.applies_to.end(),
                   layer_index) != constraint_.applies_to.end();
}

void SpectralProjector::apply(Mlp& model) {
  if (!constraint_.bounded()) return;
  const double cap = constraint_.layer_cap(model.n_layers());
  auto& layers = model.layers();
  if (warm_.size() != layers.size()) {
    warm_.clear();
    for (const auto& l : layers) warm_.push_back(start_vector(l.W.cols()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!constrained(static_cast<int>(i))) continue;
    Mat& w = layers[i].W;
    if (w.isZero(0.0)) continue;
    double est = 0.0;
    for (int k = 0; k < constraint_.power_iters; ++k) {
      est = gram_step(w, warm_[i]);
    }
    if (est > cap) w *= cap / est;
  }
}

void SpectralProjector::finalize(Mlp& model) {
  if (!constraint_.bounded()) return;
  const double cap = constraint_.layer_cap(model.n_layers());
  auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!constrained(static_cast<int>(i))) continue;
    Mat& w = layers[i].W;
    for (int round = 0; round < 4; ++round) {
      const double sigma = exact_norm(w);
      if (sigma <= cap) break;
      w *= cap / sigma;
    }
  }
}

Mlp spectral_project(Mlp model, const SpectralConstraint& constraint) {
  if (!constraint.bounded()) {
    throw ConfigError("spectral_project: constraint must be bounded");
  }
  SpectralProjector proj(constraint);
  proj.apply(model);
  proj.finalize(model);
  return model;
}

}  // namespace ccil::nn
