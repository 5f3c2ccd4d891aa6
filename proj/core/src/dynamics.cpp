#include "ccil/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "ccil/nn/serialize.hpp"

namespace ccil {

using nlohmann::json;

DynamicsModel::DynamicsModel(nn::Mlp net, nn::SpectralConstraint constraint,
                             Normalizer in_norm, Normalizer out_norm,
                             int state_dim, int action_dim)
    : net_(std::move(net)),
      constraint_(constraint),
      in_norm_(std::move(in_norm)),
      out_norm_(std::move(out_norm)),
      state_dim_(state_dim),
      action_dim_(action_dim) {
  if (net_.input_dim() != state_dim_ + action_dim_ ||
      net_.output_dim() != state_dim_) {
    throw ConfigError("dynamics model: network shape does not match dims");
  }
  if (in_norm_.dim() != state_dim_ + action_dim_ || out_norm_.dim() != state_dim_) {
    throw ConfigError("dynamics model: normalizer dims do not match");
  }
}

void DynamicsModel::set_errors(double eps_train, double eps_max) {
  if (eps_train < 0 || eps_max < 0 || eps_train > eps_max) {
    throw ConfigError("dynamics model: need 0 <= eps_train <= eps_max");
  }
  eps_train_ = eps_train;
  eps_max_ = eps_max;
}

Vec DynamicsModel::predict(const Vec& s, const Vec& a) const {
  if (s.size() != state_dim_ || a.size() != action_dim_) {
    throw InputError("dynamics predict: dimension mismatch");
  }
  Vec x(state_dim_ + action_dim_);
  x.head(state_dim_) = s;
  x.tail(action_dim_) = a;
  return out_norm_.denormalize(net_.forward(in_norm_.normalize(x)));
}

Vec DynamicsModel::next_state(const Vec& s, const Vec& a) const {
  return s + predict(s, a);
}

Mat DynamicsModel::jacobian(const Vec& s, const Vec& a) const {
  if (s.size() != state_dim_ || a.size() != action_dim_) {
    throw InputError("dynamics jacobian: dimension mismatch");
  }
  Vec x(state_dim_ + action_dim_);
  x.head(state_dim_) = s;
  x.tail(action_dim_) = a;
  Mat j = net_.jacobian(in_norm_.normalize(x));
  // Chain rule through the affine (de)normalization: raw Jacobian is
  // diag(out_scale) * J_net * diag(1 / in_scale).
  j.array().colwise() *= out_norm_.scale.array();
  j.array().rowwise() /= in_norm_.scale.transpose().array();
  return j;
}

Mat DynamicsModel::state_jacobian(const Vec& s, const Vec& a) const {
  return jacobian(s, a).leftCols(state_dim_);
}

void DynamicsModel::save(const std::string& path) const {
  json j;
  j["kind"] = "dynamics";
  j["version"] = std::string(kVersion);
  j["state_dim"] = state_dim_;
  j["action_dim"] = action_dim_;
  if (constraint_.bounded()) {
    j["constraint"] = {{"cap", constraint_.cap},
                       {"power_iters", constraint_.power_iters}};
  } else {
    j["constraint"] = nullptr;
  }
  j["eps_train"] = eps_train_;
  j["eps_max"] = eps_max_;
  j["net"] = to_json(net_);
  j["in_norm"] = to_json(in_norm_);
  j["out_norm"] = to_json(out_norm_);
  save_json_file(path, j);
}

DynamicsModel DynamicsModel::load(const std::string& path) {
  json j = load_json_file(path);
  if (!j.contains("kind") || j["kind"] != "dynamics") {
    throw InputError(path + ": not a dynamics model file");
  }
  nn::SpectralConstraint constraint = nn::SpectralConstraint::unbounded();
  if (!j["constraint"].is_null()) {
    constraint = nn::SpectralConstraint::with_cap(
        j["constraint"]["cap"].get<double>(),
        j["constraint"]["power_iters"].get<int>());
  }
  DynamicsModel m(mlp_from_json(j["net"]), constraint,
                  normalizer_from_json(j["in_norm"]),
                  normalizer_from_json(j["out_norm"]),
                  j["state_dim"].get<int>(), j["action_dim"].get<int>());
  m.set_errors(j["eps_train"].get<double>(), j["eps_max"].get<double>());
  return m;
}

DynamicsTrainResult train_dynamics(const TrajectoryDataset& data,
                                   const nn::SpectralConstraint& constraint,
                                   const DynamicsTrainOptions& opts) {
  if (data.empty()) throw InputError("train_dynamics: empty dataset");
  opts.train.validate();
  if (opts.holdout_fraction < 0 || opts.holdout_fraction >= 1) {
    throw ConfigError("train_dynamics: holdout_fraction must be in [0, 1)");
  }

  const Mat all_inputs = data.inputs();
  const Mat all_targets = data.residuals();
  const Eigen::Index n = all_inputs.cols();
  const Eigen::Index n_hold =
      static_cast<Eigen::Index>(std::floor(opts.holdout_fraction * static_cast<double>(n)));
  const Eigen::Index n_train = n - n_hold;
  if (n_train < 1) throw ConfigError("train_dynamics: holdout leaves no training data");

  const Mat inputs = all_inputs.leftCols(n_train);
  const Mat targets = all_targets.leftCols(n_train);

  const Normalizer in_norm = Normalizer::fit(inputs);
  const Normalizer out_norm = Normalizer::fit(targets);
  const Mat x = in_norm.normalize(inputs);
  const Mat y = out_norm.normalize(targets);

  std::vector<int> sizes;
  sizes.push_back(data.state_dim() + data.action_dim());
  for (int h : opts.hidden) {
    if (h < 1) throw ConfigError("train_dynamics: hidden sizes must be positive");
    sizes.push_back(h);
  }
  sizes.push_back(data.state_dim());

  nn::Mlp net = nn::Mlp::init(sizes, nn::Activation::Tanh, opts.train.seed);
  const std::vector<double> weights(static_cast<std::size_t>(n_train), 1.0);
  nn::FitResult fitres = nn::fit(net, x, y, weights, opts.train, constraint);

  DynamicsModel model(std::move(net), constraint, in_norm, out_norm,
                      data.state_dim(), data.action_dim());

  // Residual errors in raw units over the data the model actually saw.
  double sum_err = 0.0;
  double max_err = 0.0;
  for (Eigen::Index i = 0; i < n_train; ++i) {
    const Vec s = inputs.col(i).head(data.state_dim());
    const Vec a = inputs.col(i).tail(data.action_dim());
    const double err = (model.predict(s, a) - targets.col(i)).norm();
    sum_err += err;
    max_err = std::max(max_err, err);
  }
  model.set_errors(sum_err / static_cast<double>(n_train), max_err);

  DynamicsTrainResult result;
  result.final_loss = fitres.final_loss;
  if (n_hold > 0) {
    double hold = 0.0;
    for (Eigen::Index i = n_train; i < n; ++i) {
      const Vec s = all_inputs.col(i).head(data.state_dim());
      const Vec a = all_inputs.col(i).tail(data.action_dim());
      hold += (model.predict(s, a) - all_targets.col(i)).norm();
    }
    result.eps_holdout = hold / static_cast<double>(n_hold);
  }
  result.model = std::move(model);
  return result;
}

double local_lipschitz(const DynamicsModel& model, const Vec& s, const Vec& a) {
  return nn::spectral_norm(model.state_jacobian(s, a), nn::kMeasureIters);
}

LipschitzSummary lipschitz_distribution(const DynamicsModel& model,
                                        const TrajectoryDataset& data,
                                        int hist_bins) {
  if (data.empty()) throw InputError("lipschitz_distribution: empty dataset");
  LipschitzSummary out;
  out.values.reserve(data.n_transitions());
  for (const Transition* tr : data.flatten()) {
    out.values.push_back(local_lipschitz(model, tr->s, tr->a));
  }
  out.mean = stats::mean(out.values);
  out.q025 = stats::quantile(out.values, 0.025);
  out.q500 = stats::quantile(out.values, 0.5);
  out.q975 = stats::quantile(out.values, 0.975);
  out.hist = stats::histogram(out.values, hist_bins);
  return out;
}

}  // namespace ccil
