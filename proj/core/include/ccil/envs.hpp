#ifndef CCIL_ENVS_HPP_
#define CCIL_ENVS_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ccil/dataset.hpp"

namespace ccil {

struct StepOut {
  Vec s_next;
  bool contact = false;  // true iff a constraint (clamp) branch executed
};

// Deterministic simulated task: pure step function with additive residual
// structure s' = s + f(s, a), a pure success predicate on the final state, a
// scripted expert, and a fixed 16-point initial-condition grid for
// evaluation. All quantities are dimensionless; one step advances a fixed dt.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int horizon() const = 0;

  virtual StepOut step(const Vec& s, const Vec& a) const = 0;
  virtual bool success(const Vec& final_state) const = 0;

  virtual Vec sample_initial(rng::Engine& g) const = 0;
  virtual std::vector<Vec> initial_grid() const = 0;  // 16 fixed states

  virtual Vec expert_action(const Vec& s) const = 0;

  // Analytic global Lipschitz constant of the residual map f w.r.t. (s, a),
  // for environments whose dynamics are smooth enough to admit one.
  virtual std::optional<double> true_lipschitz() const { return std::nullopt; }
};

// Catalog: pendulum (smooth, globally Lipschitz), wallgrasp (piecewise with
// wall-contact clamp and a grasp regime), peg1d (narrow-tolerance insertion
// with contact friction and a hard stop).
std::unique_ptr<Environment> make_env(const std::string& name);
const std::vector<std::string>& env_names();

using Controller = std::function<Vec(const Vec&)>;

Controller scripted_expert(const Environment& env);

struct RolloutResult {
  Trajectory transitions;
  std::vector<bool> contact;  // per step
  bool success = false;
  std::uint64_t noise_seed = 0;
};

// Roll the controller out from s0 for env.horizon() steps. Observation noise
// (scale * standard normal per state dimension, drawn from noise_seed) is
// added to the controller's input only; the world itself stays deterministic,
// and the recorded transitions hold true states.
RolloutResult rollout(const Environment& env, const Controller& pi,
                      const Vec& s0, double noise_scale,
                      std::uint64_t noise_seed);

// n_traj successful noise-free expert rollouts from sampled initial states;
// failures are dropped and re-sampled. Throws EnvError if 10*n_traj attempts
// are exhausted first (the expert contract is >= 95% success, so this
// indicates a misconfigured environment).
TrajectoryDataset collect(const Environment& env, const Controller& expert,
                          int n_traj, std::uint64_t seed);

struct EvalResult {
  int successes = 0;
  int trials = 0;
  std::vector<RolloutResult> rollouts;

  double rate() const {
    return trials > 0 ? static_cast<double>(successes) / trials : 0.0;
  }
};

// n_trials rollouts round-robin over the fixed initial grid, each with its
// own derived noise seed.
EvalResult evaluate(const Environment& env, const Controller& pi, int n_trials,
                    double noise_scale, std::uint64_t seed);

// Recover per-transition contact flags by replaying each (s, a) through the
// simulator; exact for data generated by the same environment.
std::vector<bool> contact_flags(const Environment& env,
                                const TrajectoryDataset& data);

}  // namespace ccil

#endif  // CCIL_ENVS_HPP_
