#include "ccil/policy.hpp"

#include <algorithm>
#include <cmath>

#include "ccil/nn/serialize.hpp"

namespace ccil {

using nlohmann::json;

namespace {

constexpr int kPoseDim = 8;  // [x(3), q(4), c(1)]

void check_pose_dim(Eigen::Index dim) {
  if (dim != kPoseDim) {
    throw ConfigError("pose actions must be 8-dimensional [x, q, c]");
  }
}

Vec normalized_quat(const Vec& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InputError("action_loss: zero-norm quaternion");
  }
  return q / n;
}

}  // namespace

std::string to_string(ActionSpace s) {
  return s == ActionSpace::RawVector ? "raw" : "pose";
}

ActionSpace action_space_from_string(const std::string& s) {
  if (s == "raw") return ActionSpace::RawVector;
  if (s == "pose") return ActionSpace::Pose;
  throw ConfigError("unknown action space: " + s);
}

double quaternion_angle(const Vec& q_target, const Vec& q_pred) {
  const Vec u = normalized_quat(q_target);
  const Vec v = normalized_quat(q_pred);
  const double d = std::clamp(std::abs(u.dot(v)), 0.0, 1.0);
  return 2.0 * std::acos(d);
}

double action_loss(const Vec& target, const Vec& pred, const LossWeights& w,
                   ActionSpace space) {
  if (target.size() != pred.size()) {
    throw InputError("action_loss: dimension mismatch");
  }
  if (space == ActionSpace::RawVector) {
    return w.position * (target - pred).squaredNorm();
  }
  check_pose_dim(target.size());
  const double theta = quaternion_angle(target.segment(3, 4), pred.segment(3, 4));
  return w.position * (target.head(3) - pred.head(3)).squaredNorm() +
         w.rotation * theta * theta +
         w.gripper * (target[7] - pred[7]) * (target[7] - pred[7]);
}

namespace {

// Per-sample pose loss with analytic gradient w.r.t. the raw prediction.
// The theta^2 term's derivative through d = <u, v_hat> is
// -4*theta/sqrt(1-d^2), which tends to the finite limit -8 as d -> 1
// (theta ~ 2*sqrt(2(1-d)) there), so the gradient is continuous at zero
// rotation error.
nn::LossFn pose_loss_fn(LossWeights w) {
  return [w](const Vec& pred, const Vec& target, Vec& grad) -> double {
    check_pose_dim(pred.size());
    grad.setZero(pred.size());

    const Vec dx = pred.head(3) - target.head(3);
    grad.head(3) = 2.0 * w.position * dx;
    const double dc = pred[7] - target[7];
    grad[7] = 2.0 * w.gripper * dc;

    const Vec u = normalized_quat(target.segment(3, 4));
    const Vec q = pred.segment(3, 4);
    const double qn = q.norm();
    if (!(qn > 0.0) || !std::isfinite(qn)) {
      throw InputError("pose loss: zero-norm predicted quaternion");
    }
    const Vec v = q / qn;
    const double dot = u.dot(v);
    const double d = std::clamp(std::abs(dot), 0.0, 1.0);
    const double theta = 2.0 * std::acos(d);

    // d(theta^2)/dd, with its removable singularity at d = 1 filled in.
    const double dtheta2_dd =
        (d > 1.0 - 1e-9) ? -8.0 : -4.0 * theta / std::sqrt(1.0 - d * d);
    const double sign = (dot >= 0.0) ? 1.0 : -1.0;
    // d(dot)/dq through the normalization: (I - v v^T) u / |q|.
    const Vec ddot_dq = (u - v * dot) / qn;
    grad.segment(3, 4) = w.rotation * dtheta2_dd * sign * ddot_dq;

    return w.position * dx.squaredNorm() + w.rotation * theta * theta +
           w.gripper * dc * dc;
  };
}

}  // namespace

AugmentedDataset AugmentedDataset::from(
    const TrajectoryDataset& demos, const std::vector<CorrectiveLabel>& accepted,
    double generated_weight) {
  if (generated_weight <= 0.0) {
    throw ConfigError("augmented dataset: generated_weight must be positive");
  }
  AugmentedDataset out;
  out.generated_weight = generated_weight;
  out.expert.reserve(demos.n_transitions());
  for (const Transition* tr : demos.flatten()) {
    out.expert.emplace_back(tr->s, tr->a);
  }
  out.generated.reserve(accepted.size());
  for (const auto& lab : accepted) {
    if (!lab.accepted) {
      throw InputError("augmented dataset: got a non-accepted label");
    }
    out.generated.emplace_back(lab.s_g, lab.a_g);
  }
  return out;
}

PolicyModel::PolicyModel(nn::Mlp net, ActionSpace space, LossWeights weights,
                         Normalizer s_norm, Normalizer a_norm)
    : net_(std::move(net)),
      space_(space),
      weights_(weights),
      s_norm_(std::move(s_norm)),
      a_norm_(std::move(a_norm)) {
  if (net_.input_dim() != s_norm_.dim() || net_.output_dim() != a_norm_.dim()) {
    throw ConfigError("policy model: network shape does not match normalizers");
  }
  if (space_ == ActionSpace::Pose) check_pose_dim(a_norm_.dim());
  if (weights_.position <= 0 || weights_.rotation <= 0 || weights_.gripper <= 0) {
    throw ConfigError("policy model: loss weights must be positive");
  }
}

Vec PolicyModel::act(const Vec& s) const {
  if (s.size() != s_norm_.dim()) {
    throw InputError("policy act: state dimension mismatch");
  }
  Vec a = a_norm_.denormalize(net_.forward(s_norm_.normalize(s)));
  if (space_ == ActionSpace::Pose) {
    const double qn = a.segment(3, 4).norm();
    if (qn > 1e-12) {
      a.segment(3, 4) /= qn;
    } else {
      a.segment(3, 4) << 1, 0, 0, 0;  // degenerate output: identity rotation
    }
  }
  return a;
}

void PolicyModel::save(const std::string& path) const {
  json j;
  j["kind"] = "policy";
  j["version"] = std::string(kVersion);
  j["action_space"] = to_string(space_);
  j["loss_weights"] = {weights_.position, weights_.rotation, weights_.gripper};
  j["net"] = to_json(net_);
  j["s_norm"] = to_json(s_norm_);
  j["a_norm"] = to_json(a_norm_);
  save_json_file(path, j);
}

PolicyModel PolicyModel::load(const std::string& path) {
  json j = load_json_file(path);
  if (!j.contains("kind") || j["kind"] != "policy") {
    throw InputError(path + ": not a policy model file");
  }
  LossWeights w;
  w.position = j["loss_weights"][0].get<double>();
  w.rotation = j["loss_weights"][1].get<double>();
  w.gripper = j["loss_weights"][2].get<double>();
  return PolicyModel(mlp_from_json(j["net"]),
                     action_space_from_string(j["action_space"].get<std::string>()),
                     w, normalizer_from_json(j["s_norm"]),
                     normalizer_from_json(j["a_norm"]));
}

PolicyTrainResult train_policy(const AugmentedDataset& data,
                               const PolicyTrainOptions& opts) {
  if (data.size() == 0) throw InputError("train_policy: empty dataset");
  opts.train.validate();

  const auto n = static_cast<Eigen::Index>(data.size());
  const auto s_dim = static_cast<Eigen::Index>(data.expert.empty()
                                                   ? data.generated[0].first.size()
                                                   : data.expert[0].first.size());
  const auto a_dim = static_cast<Eigen::Index>(data.expert.empty()
                                                   ? data.generated[0].second.size()
                                                   : data.expert[0].second.size());

  Mat states(s_dim, n);
  Mat actions(a_dim, n);
  std::vector<double> weights;
  weights.reserve(static_cast<std::size_t>(n));
  Eigen::Index k = 0;
  for (const auto& [s, a] : data.expert) {
    states.col(k) = s;
    actions.col(k) = a;
    weights.push_back(1.0);
    ++k;
  }
  for (const auto& [s, a] : data.generated) {
    states.col(k) = s;
    actions.col(k) = a;
    weights.push_back(data.generated_weight);
    ++k;
  }
  if (!states.allFinite() || !actions.allFinite()) {
    throw InputError("train_policy: non-finite training pairs");
  }

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(s_dim));
  for (int h : opts.hidden) {
    if (h < 1) throw ConfigError("train_policy: hidden sizes must be positive");
    sizes.push_back(h);
  }
  sizes.push_back(static_cast<int>(a_dim));
  nn::Mlp net = nn::Mlp::init(sizes, nn::Activation::Tanh, opts.train.seed);

  const Normalizer s_norm = Normalizer::fit(states);
  PolicyTrainResult result;
  if (opts.space == ActionSpace::RawVector) {
    const Normalizer a_norm = Normalizer::fit(actions);
    const nn::FitResult fr =
        nn::fit(net, s_norm.normalize(states), a_norm.normalize(actions),
                weights, opts.train);
    result.final_loss = fr.final_loss;
    result.model =
        PolicyModel(std::move(net), opts.space, opts.weights, s_norm, a_norm);
  } else {
    // Pose outputs are trained in raw action units (an affine squeeze of the
    // quaternion block would change the geodesic loss), states normalized.
    check_pose_dim(a_dim);
    // Start the quaternion head at the identity rotation; zero-init biases
    // would otherwise make the initial prediction a zero-norm quaternion for
    // inputs at the normalizer mean.
    net.layers().back().b[3] = 1.0;
    const Normalizer a_norm = Normalizer::identity(static_cast<int>(a_dim));
    const nn::FitResult fr =
        nn::fit(net, s_norm.normalize(states), actions, weights, opts.train,
                nn::SpectralConstraint::unbounded(), pose_loss_fn(opts.weights));
    result.final_loss = fr.final_loss;
    result.model =
        PolicyModel(std::move(net), opts.space, opts.weights, s_norm, a_norm);
  }
  return result;
}

}  // namespace ccil
