#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ccil/envs.hpp"
#include "support/oracles.hpp"

using namespace ccil;

namespace {

Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Residual map f(s, a) = step(s, a).s_next - s as a function of the stacked
// vector z = [s; a], for finite-difference probing.
Vec residual_of(const Environment& env, const Vec& z) {
  const Vec s = z.head(env.state_dim());
  const Vec a = z.tail(env.action_dim());
  return env.step(s, a).s_next - s;
}

}  // namespace

TEST_CASE("environment catalog") {
  CHECK(env_names() == std::vector<std::string>{"pendulum", "wallgrasp",
                                                "peg1d"});
  for (const auto& name : env_names()) {
    auto env = make_env(name);
    CHECK(env->name() == name);
    CHECK(env->state_dim() >= 2);
    CHECK(env->action_dim() >= 1);
    CHECK(env->horizon() > 0);
    CHECK(env->initial_grid().size() == 16);
    for (const Vec& s : env->initial_grid()) {
      CHECK(s.size() == env->state_dim());
    }
  }
  CHECK_THROWS_AS(make_env("cartpole"), InputError);

  CHECK(make_env("pendulum")->true_lipschitz().has_value());
  CHECK_FALSE(make_env("wallgrasp")->true_lipschitz().has_value());
  CHECK_FALSE(make_env("peg1d")->true_lipschitz().has_value());
}

TEST_CASE("pendulum step: closed form, smooth, no contact") {
  auto env = make_env("pendulum");
  const double dt = 0.05, g = 10.0, c = 0.15;

  // Upright equilibrium with zero torque is a fixed point.
  StepOut eq = env->step(Vec::Zero(2), Vec::Zero(1));
  CHECK(eq.s_next == Vec::Zero(2));
  CHECK_FALSE(eq.contact);

  const double theta = 0.1, omega = 0.2, u = 0.5;
  StepOut so = env->step(make_vec({theta, omega}), make_vec({u}));
  const double omega_next = omega + dt * (g * std::sin(theta) - c * omega + u);
  const double theta_next = theta + dt * omega_next;
  CHECK(so.s_next[0] == doctest::Approx(theta_next).epsilon(1e-15));
  CHECK(so.s_next[1] == doctest::Approx(omega_next).epsilon(1e-15));
  CHECK_FALSE(so.contact);
}

TEST_CASE("pendulum analytic lipschitz constant") {
  auto env = make_env("pendulum");
  const double K = env->true_lipschitz().value();

  // At the upright pose (cos theta = 1) the bound is attained: the FD
  // Jacobian's top singular value must match K.
  auto f = [&](const Vec& z) { return residual_of(*env, z); };
  const Mat j0 = oracles::fd_jacobian(f, make_vec({0.0, 0.3, 0.5}));
  CHECK(oracles::svd_spectral_norm(j0) == doctest::Approx(K).epsilon(1e-6));

  // Elsewhere the local norm stays below it.
  const Mat j1 = oracles::fd_jacobian(f, make_vec({1.3, -0.5, 2.0}));
  CHECK(oracles::svd_spectral_norm(j1) < K);

  // And K is a global Lipschitz constant over random point pairs.
  rng::Engine gen(17);
  const double kPi = std::acos(-1.0);
  for (int i = 0; i < 200; ++i) {
    Vec z1(3), z2(3);
    z1 << rng::uniform(gen, -kPi, kPi), rng::uniform(gen, -3, 3),
        rng::uniform(gen, -8, 8);
    z2 << rng::uniform(gen, -kPi, kPi), rng::uniform(gen, -3, 3),
        rng::uniform(gen, -8, 8);
    CHECK((f(z1) - f(z2)).norm() <= K * (z1 - z2).norm() + 1e-12);
  }
}

TEST_CASE("wallgrasp step: free space, wall clamp, grasp coupling") {
  auto env = make_env("wallgrasp");
  const double dt = 0.1, drag = 0.5;

  SUBCASE("free-space integration is exact") {
    const Vec s = make_vec({0.2, 0.3, 0.5, -0.2, 0.35, 0.0});
    const Vec a = make_vec({1.0, 2.0, 0.5});
    StepOut so = env->step(s, a);
    const double vx = s[2] + dt * (a[0] - drag * s[2]);
    const double vy = s[3] + dt * (a[1] - drag * s[3]);
    CHECK_FALSE(so.contact);
    CHECK(so.s_next[0] == doctest::Approx(s[0] + dt * vx).epsilon(1e-15));
    CHECK(so.s_next[1] == doctest::Approx(s[1] + dt * vy).epsilon(1e-15));
    CHECK(so.s_next[2] == doctest::Approx(vx).epsilon(1e-15));
    CHECK(so.s_next[3] == doctest::Approx(vy).epsilon(1e-15));
    CHECK(so.s_next[4] == s[4]);  // object untouched without a grasp
    CHECK(so.s_next[5] == doctest::Approx(0.05).epsilon(1e-15));
  }

  SUBCASE("crossing the wall clamps position and kills vx") {
    const Vec s = make_vec({0.99, 0.3, 1.0, 0.0, 0.3, 0.0});
    StepOut so = env->step(s, make_vec({4.0, 0.0, 0.0}));
    CHECK(so.contact);
    CHECK(so.s_next[0] == 1.0);
    CHECK(so.s_next[2] == 0.0);

    // Just short of the wall: same action, no clamp.
    const Vec s2 = make_vec({0.8, 0.3, 0.5, 0.0, 0.3, 0.0});
    StepOut so2 = env->step(s2, make_vec({0.0, 0.0, 0.0}));
    CHECK_FALSE(so2.contact);
    CHECK(so2.s_next[0] < 1.0);
  }

  SUBCASE("object follows the hand only while grasped") {
    const Vec held = make_vec({1.0, 0.30, 0.0, 0.0, 0.30, 0.8});
    StepOut so = env->step(held, make_vec({0.0, 2.0, 0.0}));
    const double dy = so.s_next[1] - held[1];
    CHECK(dy > 0.0);
    CHECK(so.s_next[4] == doctest::Approx(0.30 + dy).epsilon(1e-15));

    Vec open = held;
    open[5] = 0.5;  // below the grip threshold
    StepOut so2 = env->step(open, make_vec({0.0, 2.0, 0.0}));
    CHECK(so2.s_next[4] == 0.30);

    Vec far = held;
    far[1] = 0.60;  // outside the capture radius
    StepOut so3 = env->step(far, make_vec({0.0, 2.0, 0.0}));
    CHECK(so3.s_next[4] == 0.30);
  }

  SUBCASE("grip integrates and clamps to [0, 1]") {
    Vec s = make_vec({0.2, 0.3, 0.0, 0.0, 0.35, 0.95});
    CHECK(env->step(s, make_vec({0, 0, 3.0})).s_next[5] == 1.0);
    s[5] = 0.05;
    CHECK(env->step(s, make_vec({0, 0, -3.0})).s_next[5] == 0.0);
    s[5] = 0.5;
    CHECK(env->step(s, make_vec({0, 0, 1.0})).s_next[5] ==
          doctest::Approx(0.6).epsilon(1e-15));
  }

  SUBCASE("success needs height and an intact grasp") {
    CHECK(env->success(make_vec({1.0, 0.95, 0, 0, 0.95, 1.0})));
    CHECK_FALSE(env->success(make_vec({1.0, 0.95, 0, 0, 0.95, 0.5})));   // open
    CHECK_FALSE(env->success(make_vec({1.0, 0.5, 0, 0, 0.5, 1.0})));     // low
    CHECK_FALSE(env->success(make_vec({0.5, 0.95, 0, 0, 0.95, 1.0})));   // away
  }
}

TEST_CASE("wallgrasp jacobian changes structure across the wall") {
  auto env = make_env("wallgrasp");
  const Vec a = make_vec({4.0, 0.0, 0.0});

  auto f_of_s = [&](const Vec& s) -> Vec { return env->step(s, a).s_next - s; };
  // Free flight: position residual responds to velocity.
  const Mat j_free =
      oracles::fd_jacobian(f_of_s, make_vec({0.2, 0.3, 0.5, 0.0, 0.35, 0.0}));
  CHECK(j_free(0, 2) == doctest::Approx(0.1 * (1 - 0.5 * 0.1)).epsilon(1e-6));

  // Deep in contact (both FD probes stay clamped): the same entry is dead,
  // and the vx residual row cancels the incoming velocity exactly.
  const Mat j_wall =
      oracles::fd_jacobian(f_of_s, make_vec({1.0, 0.3, 2.0, 0.0, 0.35, 0.0}));
  CHECK(j_wall(0, 2) == doctest::Approx(0.0));
  CHECK(j_wall(2, 2) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("peg1d step: friction regimes and hard stop") {
  auto env = make_env("peg1d");
  const double dt = 0.05;

  // Free region: no friction term.
  StepOut free_step = env->step(make_vec({0.5, 0.2}), make_vec({1.0}));
  const double v_free = 0.2 + dt * (1.0 - 1.0 * 0.2);
  CHECK(free_step.s_next[1] == doctest::Approx(v_free).epsilon(1e-15));
  CHECK(free_step.s_next[0] == doctest::Approx(0.5 + dt * v_free).epsilon(1e-15));

  // Channel: Coulomb friction opposes motion.
  StepOut chan = env->step(make_vec({0.9, 0.2}), make_vec({1.0}));
  const double v_chan = 0.2 + dt * (1.0 - 0.2 - 0.4);
  CHECK(chan.s_next[1] == doctest::Approx(v_chan).epsilon(1e-15));
  StepOut chan_back = env->step(make_vec({0.9, -0.2}), make_vec({-1.0}));
  const double v_back = -0.2 + dt * (-1.0 + 0.2 + 0.4);
  CHECK(chan_back.s_next[1] == doctest::Approx(v_back).epsilon(1e-15));

  // Hard stop.
  StepOut stop = env->step(make_vec({1.19, 1.0}), make_vec({4.0}));
  CHECK(stop.contact);
  CHECK(stop.s_next[0] == 1.2);
  CHECK(stop.s_next[1] == 0.0);

  CHECK(env->success(make_vec({1.10, 0.0})));
  CHECK(env->success(make_vec({1.115, -0.04})));
  CHECK_FALSE(env->success(make_vec({1.13, 0.0})));
  CHECK_FALSE(env->success(make_vec({1.10, 0.10})));
}

TEST_CASE("scripted experts succeed noise-free from every grid start") {
  for (const auto& name : env_names()) {
    auto env = make_env(name);
    Controller expert = scripted_expert(*env);
    int wins = 0;
    for (const Vec& s0 : env->initial_grid()) {
      wins += rollout(*env, expert, s0, 0.0, 0).success ? 1 : 0;
    }
    INFO("env ", name);
    CHECK(wins == 16);
  }
}

TEST_CASE("rollout: records true states, noise hits only the controller") {
  auto env = make_env("wallgrasp");
  Controller expert = scripted_expert(*env);
  const Vec s0 = env->initial_grid()[3];

  RolloutResult r = rollout(*env, expert, s0, 0.2, 99);
  REQUIRE(static_cast<int>(r.transitions.size()) == env->horizon());
  REQUIRE(r.contact.size() == r.transitions.size());
  CHECK(r.noise_seed == 99);

  // Chaining plus: replaying the recorded actions noise-free reproduces the
  // recorded states bit-for-bit, so the world itself saw no noise.
  CHECK(r.transitions[0].s == s0);
  Vec s = s0;
  for (std::size_t t = 0; t < r.transitions.size(); ++t) {
    CHECK(r.transitions[t].s == s);
    StepOut so = env->step(s, r.transitions[t].a);
    CHECK(so.s_next == r.transitions[t].s_next);
    CHECK(so.contact == r.contact[t]);
    s = so.s_next;
  }
  CHECK(r.success == env->success(s));

  // The controller does see perturbed observations.
  std::vector<Vec> seen;
  Controller spy = [&](const Vec& obs) {
    seen.push_back(obs);
    return env->expert_action(obs);
  };
  RolloutResult rn = rollout(*env, spy, s0, 0.2, 99);
  bool perturbed = false;
  for (std::size_t t = 0; t < rn.transitions.size(); ++t) {
    if (seen[t] != rn.transitions[t].s) perturbed = true;
  }
  CHECK(perturbed);

  // Determinism in the seed; sensitivity across seeds.
  RolloutResult r2 = rollout(*env, expert, s0, 0.2, 99);
  REQUIRE(r2.transitions.size() == r.transitions.size());
  for (std::size_t t = 0; t < r.transitions.size(); ++t) {
    CHECK(r2.transitions[t].s_next == r.transitions[t].s_next);
    CHECK(r2.transitions[t].a == r.transitions[t].a);
  }
  RolloutResult r3 = rollout(*env, expert, s0, 0.2, 100);
  bool differs = false;
  for (std::size_t t = 0; t < r.transitions.size(); ++t) {
    if (r3.transitions[t].a != r.transitions[t].a) differs = true;
  }
  CHECK(differs);

  CHECK_THROWS_AS(rollout(*env, expert, Vec::Zero(2), 0.0, 0), InputError);
  CHECK_THROWS_AS(rollout(*env, expert, s0, -0.1, 0), InputError);
  Controller bad_dim = [](const Vec&) { return Vec::Zero(1); };
  CHECK_THROWS_AS(rollout(*env, bad_dim, s0, 0.0, 0), EnvError);
  Controller nan_action = [&](const Vec&) {
    return Vec::Constant(3, std::numeric_limits<double>::quiet_NaN());
  };
  CHECK_THROWS_AS(rollout(*env, nan_action, s0, 0.0, 0), EnvError);
}

TEST_CASE("collect: deterministic successful demos; hopeless experts throw") {
  auto env = make_env("pendulum");
  Controller expert = scripted_expert(*env);

  TrajectoryDataset d1 = collect(*env, expert, 5, 42);
  TrajectoryDataset d2 = collect(*env, expert, 5, 42);
  REQUIRE(d1.trajectories().size() == 5);
  REQUIRE(d2.trajectories().size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    REQUIRE(d1.trajectories()[k].size() == d2.trajectories()[k].size());
    for (std::size_t t = 0; t < d1.trajectories()[k].size(); ++t) {
      CHECK(d1.trajectories()[k][t].s == d2.trajectories()[k][t].s);
      CHECK(d1.trajectories()[k][t].a == d2.trajectories()[k][t].a);
    }
    CHECK(static_cast<int>(d1.trajectories()[k].size()) == env->horizon());
    CHECK(env->success(d1.trajectories()[k].back().s_next));
  }

  TrajectoryDataset d3 = collect(*env, expert, 5, 43);
  CHECK(d3.trajectories()[0][0].s != d1.trajectories()[0][0].s);

  auto wall = make_env("wallgrasp");
  Controller inert = [](const Vec&) { return Vec::Zero(3); };
  CHECK_THROWS_AS(collect(*wall, inert, 2, 1), EnvError);
  CHECK_THROWS_AS(collect(*wall, inert, 0, 1), InputError);
}

TEST_CASE("evaluate: grid round-robin with per-trial noise seeds") {
  auto env = make_env("pendulum");
  Controller expert = scripted_expert(*env);

  EvalResult r = evaluate(*env, expert, 20, 0.0, 7);
  CHECK(r.trials == 20);
  CHECK(r.successes == 20);
  CHECK(r.rate() == 1.0);
  const auto grid = env->initial_grid();
  for (int i = 0; i < 20; ++i) {
    CHECK(r.rollouts[static_cast<std::size_t>(i)].transitions[0].s ==
          grid[static_cast<std::size_t>(i) % grid.size()]);
  }
  for (int i = 1; i < 20; ++i) {
    CHECK(r.rollouts[static_cast<std::size_t>(i)].noise_seed !=
          r.rollouts[0].noise_seed);
  }

  EvalResult ra = evaluate(*env, expert, 32, 0.05, 3);
  EvalResult rb = evaluate(*env, expert, 32, 0.05, 3);
  CHECK(ra.successes == rb.successes);
  for (int i = 0; i < 32; ++i) {
    CHECK(ra.rollouts[static_cast<std::size_t>(i)].noise_seed ==
          rb.rollouts[static_cast<std::size_t>(i)].noise_seed);
  }
  EvalResult rc = evaluate(*env, expert, 32, 0.05, 4);
  CHECK(rc.rollouts[0].noise_seed != ra.rollouts[0].noise_seed);

  CHECK_THROWS_AS(evaluate(*env, expert, 0, 0.0, 1), InputError);
  CHECK(EvalResult{}.rate() == 0.0);
}

TEST_CASE("contact flags replay the simulator exactly") {
  auto env = make_env("wallgrasp");
  Controller expert = scripted_expert(*env);
  RolloutResult r = rollout(*env, expert, env->initial_grid()[0], 0.0, 0);

  TrajectoryDataset data(std::vector<Trajectory>{r.transitions});
  std::vector<bool> flags = contact_flags(*env, data);
  REQUIRE(flags.size() == r.contact.size());
  for (std::size_t t = 0; t < flags.size(); ++t) CHECK(flags[t] == r.contact[t]);

  // The expert's press-into-the-wall phase guarantees both flag values occur.
  int on = 0;
  for (bool b : flags) on += b ? 1 : 0;
  CHECK(on > 0);
  CHECK(on < static_cast<int>(flags.size()));
}
