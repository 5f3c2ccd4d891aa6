#ifndef CCIL_POLICY_HPP_
#define CCIL_POLICY_HPP_

#include <string>
#include <utility>
#include <vector>

#include "ccil/labels.hpp"

namespace ccil {

// Raw actions are regressed with squared error. Pose actions are laid out as
// [x(3), q(4), c(1)] (position, orientation quaternion, gripper scalar) and
// scored with a composite loss whose rotation term is the geodesic angle
// between quaternions, so q and -q (the same rotation) cost nothing.
enum class ActionSpace { RawVector, Pose };

std::string to_string(ActionSpace s);
ActionSpace action_space_from_string(const std::string& s);

struct LossWeights {
  double position = 1.0;  // alpha1
  double rotation = 1.0;  // alpha2
  double gripper = 1.0;   // alpha3
};

// alpha1*||x - x_hat||^2 + alpha2*theta^2 + alpha3*(c - c_hat)^2 in pose mode,
// with theta = 2*acos(clamp(|<q, q_hat>|, 0, 1)) over normalized quaternions;
// alpha1*||a - a_hat||^2 in raw mode.
double action_loss(const Vec& target, const Vec& pred, const LossWeights& w,
                   ActionSpace space);

// Geodesic angle in [0, pi] between (normalized) quaternions.
double quaternion_angle(const Vec& q_target, const Vec& q_pred);

// Expert pairs plus accepted corrective labels, trained jointly with a
// per-source weight (default 1: plain union of the two sets).
struct AugmentedDataset {
  std::vector<std::pair<Vec, Vec>> expert;     // (s, a)
  std::vector<std::pair<Vec, Vec>> generated;  // (s_g, a_g)
  double generated_weight = 1.0;

  std::size_t size() const { return expert.size() + generated.size(); }

  static AugmentedDataset from(const TrajectoryDataset& demos,
                               const std::vector<CorrectiveLabel>& accepted,
                               double generated_weight = 1.0);
};

class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(nn::Mlp net, ActionSpace space, LossWeights weights,
              Normalizer s_norm, Normalizer a_norm);

  int state_dim() const { return s_norm_.dim(); }
  int action_dim() const { return a_norm_.dim(); }
  ActionSpace action_space() const { return space_; }
  const LossWeights& loss_weights() const { return weights_; }
  const nn::Mlp& net() const { return net_; }

  // Deterministic; pose mode renormalizes the quaternion block.
  Vec act(const Vec& s) const;

  void save(const std::string& path) const;
  static PolicyModel load(const std::string& path);

 private:
  nn::Mlp net_;
  ActionSpace space_ = ActionSpace::RawVector;
  LossWeights weights_;
  Normalizer s_norm_;
  Normalizer a_norm_;
};

struct PolicyTrainOptions {
  std::vector<int> hidden = {64, 64};
  nn::TrainConfig train;
  ActionSpace space = ActionSpace::RawVector;
  LossWeights weights;
};

struct PolicyTrainResult {
  PolicyModel model;
  double final_loss = 0.0;
};

PolicyTrainResult train_policy(const AugmentedDataset& data,
                               const PolicyTrainOptions& opts);

}  // namespace ccil

#endif  // CCIL_POLICY_HPP_
