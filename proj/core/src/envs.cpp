#include "ccil/envs.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace ccil {

namespace {

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// --- pendulum -------------------------------------------------------------
// State (theta, omega) with theta measured from the upright equilibrium, so
// gravity is destabilizing; torque action. Semi-implicit Euler, smooth
// everywhere, hence globally Lipschitz with a computable constant.
class PendulumEnv final : public Environment {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;  // g / length
  static constexpr double kDamping = 0.15;
  static constexpr double kTorqueMax = 8.0;

  std::string name() const override { return "pendulum"; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  int horizon() const override { return 60; }

  StepOut step(const Vec& s, const Vec& a) const override {
    const double theta = s[0], omega = s[1], u = a[0];
    const double omega_next =
        omega + kDt * (kGravity * std::sin(theta) - kDamping * omega + u);
    const double theta_next = theta + kDt * omega_next;
    StepOut out;
    out.s_next = Vec(2);
    out.s_next << theta_next, omega_next;
    return out;
  }

  bool success(const Vec& s) const override {
    return std::abs(s[0]) <= 0.10 && std::abs(s[1]) <= 0.30;
  }

  Vec sample_initial(rng::Engine& g) const override {
    Vec s(2);
    s << rng::uniform(g, -0.6, 0.6), rng::uniform(g, -0.5, 0.5);
    return s;
  }

  std::vector<Vec> initial_grid() const override {
    std::vector<Vec> grid;
    for (double theta : {-0.6, -0.45, -0.3, -0.15, 0.15, 0.3, 0.45, 0.6}) {
      for (double omega : {-0.3, 0.3}) {
        Vec s(2);
        s << theta, omega;
        grid.push_back(s);
      }
    }
    return grid;
  }

  Vec expert_action(const Vec& s) const override {
    Vec a(1);
    a[0] = clamp(-18.0 * s[0] - 4.0 * s[1], -kTorqueMax, kTorqueMax);
    return a;
  }

  std::optional<double> true_lipschitz() const override {
    // Jacobian of the residual w.r.t. (theta, omega, u):
    //   [ dt^2*g*cos(theta), dt*(1 - c*dt), dt^2 ]
    //   [ dt*g*cos(theta),   -c*dt,         dt   ]
    // Only the first column varies, scaling with cos(theta); J J^T grows by a
    // rank-one PSD term in cos^2(theta), so the norm peaks at cos(theta)=1.
    Mat j(2, 3);
    j << kDt * kDt * kGravity, kDt * (1.0 - kDamping * kDt), kDt * kDt,
        kDt * kGravity, -kDamping * kDt, kDt;
    return j.jacobiSvd().singularValues()[0];
  }
};

// --- wallgrasp --------------------------------------------------------------
// Planar hand (position + velocity), a rigid wall at x = 1 with an object
// resting on it, and a gripper scalar. Pressing past the wall clamps position
// and kills horizontal velocity (the contact branch); the object follows the
// hand's vertical motion while grasped (close to the object with the gripper
// shut). Success = object lifted above a height threshold and still grasped.
class WallGraspEnv final : public Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kDrag = 0.5;
  static constexpr double kWallX = 1.0;
  static constexpr double kCaptureRadius = 0.12;
  static constexpr double kGripThreshold = 0.7;
  static constexpr double kLiftThreshold = 0.9;
  static constexpr double kLiftTarget = 1.05;

  std::string name() const override { return "wallgrasp"; }
  int state_dim() const override { return 6; }  // px py vx vy oy grip
  int action_dim() const override { return 3; }  // fx fy dgrip
  int horizon() const override { return 50; }

  bool grasped(const Vec& s) const {
    const double dx = s[0] - kWallX;
    const double dy = s[1] - s[4];
    return std::hypot(dx, dy) <= kCaptureRadius && s[5] >= kGripThreshold;
  }

  StepOut step(const Vec& s, const Vec& a) const override {
    const bool held = grasped(s);
    const double vx = s[2] + kDt * (a[0] - kDrag * s[2]);
    double vy = s[3] + kDt * (a[1] - kDrag * s[3]);
    const double px_cand = s[0] + kDt * vx;
    const double py = s[1] + kDt * vy;

    StepOut out;
    out.contact = px_cand > kWallX;
    const double px = out.contact ? kWallX : px_cand;
    const double vx_out = out.contact ? 0.0 : vx;
    const double oy = held ? s[4] + (py - s[1]) : s[4];
    const double grip = clamp(s[5] + kDt * a[2], 0.0, 1.0);

    out.s_next = Vec(6);
    out.s_next << px, py, vx_out, vy, oy, grip;
    return out;
  }

  bool success(const Vec& s) const override {
    return s[4] >= kLiftThreshold && grasped(s);
  }

  Vec sample_initial(rng::Engine& g) const override {
    Vec s = Vec::Zero(6);
    s[0] = rng::uniform(g, 0.10, 0.30);  // px
    s[1] = rng::uniform(g, 0.15, 0.55);  // py
    s[4] = rng::uniform(g, 0.22, 0.43);  // oy
    return s;
  }

  std::vector<Vec> initial_grid() const override {
    std::vector<Vec> grid;
    for (double px : {0.15, 0.25}) {
      for (double py : {0.2, 0.5}) {
        for (double oy : {0.25, 0.3, 0.35, 0.4}) {
          Vec s = Vec::Zero(6);
          s[0] = px;
          s[1] = py;
          s[4] = oy;
          grid.push_back(s);
        }
      }
    }
    return grid;
  }

  Vec expert_action(const Vec& s) const override {
    // Pure state feedback in three regimes: drift to a stand-off point while
    // aligning height, then press into the wall (closing only once there),
    // then lift while still pressing.
    const double kp = 6.0, kd = 4.0;
    Vec a(3);
    if (grasped(s)) {
      a[0] = 2.0;
      a[1] = kp * (kLiftTarget - s[1]) - kd * s[3];
      a[2] = 3.0;
    } else if (std::abs(s[1] - s[4]) <= 0.04) {
      a[0] = 4.0;
      a[1] = kp * (s[4] - s[1]) - kd * s[3];
      a[2] = s[0] >= kWallX - 0.05 ? 3.0 : -3.0;
    } else {
      a[0] = kp * ((kWallX - 0.25) - s[0]) - kd * s[2];
      a[1] = kp * (s[4] - s[1]) - kd * s[3];
      a[2] = -3.0;
    }
    return a;
  }
};

// --- peg1d ------------------------------------------------------------------
// 1D insertion: free travel, then a channel (x >= 0.8) with Coulomb friction,
// ending in a hard stop at 1.2. Success requires parking inside a narrow band
// around 1.10 nearly at rest.
class Peg1dEnv final : public Environment {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kDrag = 1.0;
  static constexpr double kChannelX = 0.8;
  static constexpr double kStopX = 1.2;
  static constexpr double kFriction = 0.4;
  static constexpr double kTarget = 1.10;
  static constexpr double kTolX = 0.02;
  static constexpr double kTolV = 0.05;
  static constexpr double kForceMax = 4.0;

  std::string name() const override { return "peg1d"; }
  int state_dim() const override { return 2; }  // x v
  int action_dim() const override { return 1; }  // force
  int horizon() const override { return 80; }

  StepOut step(const Vec& s, const Vec& a) const override {
    const double x = s[0], v = s[1];
    const double friction = (x >= kChannelX) ? kFriction * sgn(v) : 0.0;
    double v_next = v + kDt * (a[0] - kDrag * v - friction);
    const double x_cand = x + kDt * v_next;
    StepOut out;
    out.contact = x_cand > kStopX;
    const double x_next = out.contact ? kStopX : x_cand;
    if (out.contact) v_next = 0.0;
    out.s_next = Vec(2);
    out.s_next << x_next, v_next;
    return out;
  }

  bool success(const Vec& s) const override {
    return std::abs(s[0] - kTarget) <= kTolX && std::abs(s[1]) <= kTolV;
  }

  Vec sample_initial(rng::Engine& g) const override {
    Vec s(2);
    s << rng::uniform(g, 0.0, 0.30), rng::uniform(g, -0.05, 0.05);
    return s;
  }

  std::vector<Vec> initial_grid() const override {
    std::vector<Vec> grid;
    for (int i = 0; i < 16; ++i) {
      Vec s(2);
      s << 0.30 * static_cast<double>(i) / 15.0, 0.0;
      grid.push_back(s);
    }
    return grid;
  }

  Vec expert_action(const Vec& s) const override {
    Vec a(1);
    a[0] = clamp(60.0 * (kTarget - s[0]) - 18.0 * s[1], -kForceMax, kForceMax);
    return a;
  }
};

}  // namespace

const std::vector<std::string>& env_names() {
  static const std::vector<std::string> names = {"pendulum", "wallgrasp",
                                                 "peg1d"};
  return names;
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name == "wallgrasp") return std::make_unique<WallGraspEnv>();
  if (name == "peg1d") return std::make_unique<Peg1dEnv>();
  throw InputError("unknown environment: " + name);
}

Controller scripted_expert(const Environment& env) {
  return [&env](const Vec& s) { return env.expert_action(s); };
}

RolloutResult rollout(const Environment& env, const Controller& pi,
                      const Vec& s0, double noise_scale,
                      std::uint64_t noise_seed) {
  if (s0.size() != env.state_dim()) {
    throw InputError("rollout: initial state dimension mismatch");
  }
  if (noise_scale < 0) throw InputError("rollout: negative noise scale");

  RolloutResult out;
  out.noise_seed = noise_seed;
  out.transitions.reserve(env.horizon());
  out.contact.reserve(env.horizon());

  rng::Engine noise(noise_seed);
  Vec s = s0;
  for (int t = 0; t < env.horizon(); ++t) {
    Vec obs = s;
    if (noise_scale > 0) {
      for (Eigen::Index i = 0; i < obs.size(); ++i) {
        obs[i] += noise_scale * rng::normal(noise);
      }
    }
    const Vec a = pi(obs);
    if (a.size() != env.action_dim() || !a.allFinite()) {
      throw EnvError("rollout: controller produced an invalid action");
    }
    StepOut so = env.step(s, a);
    out.transitions.push_back({s, a, so.s_next});
    out.contact.push_back(so.contact);
    s = so.s_next;
  }
  out.success = env.success(s);
  return out;
}

TrajectoryDataset collect(const Environment& env, const Controller& expert,
                          int n_traj, std::uint64_t seed) {
  if (n_traj < 1) throw InputError("collect: n_traj must be >= 1");
  std::vector<Trajectory> kept;
  kept.reserve(static_cast<std::size_t>(n_traj));
  rng::Engine g(seed);
  const int max_attempts = 10 * n_traj;
  int attempts = 0;
  while (static_cast<int>(kept.size()) < n_traj && attempts < max_attempts) {
    const Vec s0 = env.sample_initial(g);
    RolloutResult r = rollout(env, expert, s0, 0.0, 0);
    ++attempts;
    if (r.success) kept.push_back(std::move(r.transitions));
  }
  if (static_cast<int>(kept.size()) < n_traj) {
    throw EnvError("collect: expert succeeded only " +
                   std::to_string(kept.size()) + "/" + std::to_string(attempts) +
                   " times on " + env.name() +
                   "; environment or expert misconfigured");
  }
  return TrajectoryDataset(std::move(kept));
}

EvalResult evaluate(const Environment& env, const Controller& pi, int n_trials,
                    double noise_scale, std::uint64_t seed) {
  if (n_trials < 1) throw InputError("evaluate: n_trials must be >= 1");
  const std::vector<Vec> grid = env.initial_grid();
  EvalResult out;
  out.trials = n_trials;
  out.rollouts.reserve(static_cast<std::size_t>(n_trials));
  for (int i = 0; i < n_trials; ++i) {
    const std::uint64_t trial_seed = fnv1a64(
        "eval|" + std::to_string(seed) + "|" + std::to_string(i));
    RolloutResult r = rollout(env, pi, grid[static_cast<std::size_t>(i) % grid.size()],
                              noise_scale, trial_seed);
    out.successes += r.success ? 1 : 0;
    out.rollouts.push_back(std::move(r));
  }
  return out;
}

std::vector<bool> contact_flags(const Environment& env,
                                const TrajectoryDataset& data) {
  std::vector<bool> flags;
  flags.reserve(data.n_transitions());
  for (const Transition* tr : data.flatten()) {
    flags.push_back(env.step(tr->s, tr->a).contact);
  }
  return flags;
}

}  // namespace ccil
