#ifndef CCIL_DYNAMICS_HPP_
#define CCIL_DYNAMICS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "ccil/dataset.hpp"
#include "ccil/nn/spectral.hpp"
#include "ccil/nn/train.hpp"
#include "ccil/stats.hpp"

namespace ccil {

// Residual dynamics model: s_{t+1} = s_t + f(s_t, a_t), with f the network
// prediction mapped back to raw units. The network itself operates on
// standardized inputs/outputs; the stored normalizers make predictions and
// Jacobians exact in raw units.
class DynamicsModel {
 public:
  DynamicsModel() = default;
  DynamicsModel(nn::Mlp net, nn::SpectralConstraint constraint,
                Normalizer in_norm, Normalizer out_norm, int state_dim,
                int action_dim);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const nn::Mlp& net() const { return net_; }
  const nn::SpectralConstraint& constraint() const { return constraint_; }
  const Normalizer& in_norm() const { return in_norm_; }
  const Normalizer& out_norm() const { return out_norm_; }

  double eps_train() const { return eps_train_; }  // mean residual error
  double eps_max() const { return eps_max_; }      // max residual error
  void set_errors(double eps_train, double eps_max);

  // Predicted state change f(s, a), raw units.
  Vec predict(const Vec& s, const Vec& a) const;
  Vec next_state(const Vec& s, const Vec& a) const;

  // d f / d (s, a) in raw units: state_dim x (state_dim + action_dim).
  Mat jacobian(const Vec& s, const Vec& a) const;
  // State block of the above, state_dim x state_dim.
  Mat state_jacobian(const Vec& s, const Vec& a) const;

  void save(const std::string& path) const;
  static DynamicsModel load(const std::string& path);

 private:
  nn::Mlp net_;
  nn::SpectralConstraint constraint_;
  Normalizer in_norm_;
  Normalizer out_norm_;
  int state_dim_ = 0;
  int action_dim_ = 0;
  double eps_train_ = 0.0;
  double eps_max_ = 0.0;
};

struct DynamicsTrainOptions {
  std::vector<int> hidden = {64};
  nn::TrainConfig train;
  // Diagnostics only: fraction of transitions (tail of the flattened order)
  // withheld from training; their mean error lands in eps_holdout.
  double holdout_fraction = 0.0;
};

struct DynamicsTrainResult {
  DynamicsModel model;
  double final_loss = 0.0;  // normalized-space training loss
  std::optional<double> eps_holdout;
};

// Fit the residual network on (s, a) -> s' - s pairs under the given spectral
// constraint. eps_train / eps_max are populated from a final full pass over
// the transitions the model was trained on, in raw units.
DynamicsTrainResult train_dynamics(const TrajectoryDataset& data,
                                   const nn::SpectralConstraint& constraint,
                                   const DynamicsTrainOptions& opts);

// Spectral norm of the state-block Jacobian at (s, a): the local sensitivity
// of the predicted state change to state perturbations with the action held
// fixed. Actions stay fixed because corrective labels reuse the expert action
// verbatim, so only state perturbations enter the error bound. (Using the
// full (s, a) Jacobian would be a valid but looser alternative.)
double local_lipschitz(const DynamicsModel& model, const Vec& s, const Vec& a);

struct LipschitzSummary {
  std::vector<double> values;  // one per transition, flattened order
  double mean = 0.0;
  double q025 = 0.0;
  double q500 = 0.0;
  double q975 = 0.0;
  stats::Histogram hist;
};

LipschitzSummary lipschitz_distribution(const DynamicsModel& model,
                                        const TrajectoryDataset& data,
                                        int hist_bins = 32);

}  // namespace ccil

#endif  // CCIL_DYNAMICS_HPP_
