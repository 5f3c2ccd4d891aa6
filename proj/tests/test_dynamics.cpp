#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ccil/dynamics.hpp"
#include "support/oracles.hpp"

using namespace ccil;

namespace {

// s' = s + A s + B a: the residual map is exactly linear, so a tanh net can
// drive the error to ~0 and every Jacobian has a closed form.
struct LinearSystem {
  Mat A;
  Mat B;

  TrajectoryDataset make_data(int n_traj, int len, std::uint64_t seed) const {
    rng::Engine g(seed);
    std::vector<Trajectory> trajs;
    for (int k = 0; k < n_traj; ++k) {
      Vec s(A.rows());
      for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rng::normal(g);
      Trajectory tr;
      for (int t = 0; t < len; ++t) {
        Vec a(B.cols());
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng::normal(g);
        Vec s_next = s + A * s + B * a;
        tr.push_back({s, a, s_next});
        s = s_next;
      }
      trajs.push_back(std::move(tr));
    }
    return TrajectoryDataset(std::move(trajs));
  }
};

LinearSystem small_linear() {
  Mat A(2, 2), B(2, 1);
  A << 0.05, -0.02, 0.03, 0.06;
  B << 0.10, 0.05;
  return {A, B};
}

DynamicsModel fit_linear(const LinearSystem& sys, int n_traj = 20,
                         int epochs = 700) {
  TrajectoryDataset data = sys.make_data(n_traj, 15, 7);
  DynamicsTrainOptions opts;
  opts.hidden = {64};
  opts.train.seed = 1;
  opts.train.epochs = epochs;
  return train_dynamics(data, nn::SpectralConstraint::unbounded(), opts).model;
}

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("linear system: prediction and jacobian recover A and B") {
  LinearSystem sys = small_linear();
  DynamicsModel m = fit_linear(sys);

  CHECK(m.eps_train() <= m.eps_max());
  CHECK(m.eps_max() < 0.05);

  // Jacobian at a handful of points approximates [A | B]
  Mat AB(2, 3);
  AB << sys.A, sys.B;
  rng::Engine g(3);
  for (int i = 0; i < 5; ++i) {
    Vec s(2), a(1);
    s << rng::normal(g), rng::normal(g);
    a << rng::normal(g);
    Mat j = m.jacobian(s, a);
    REQUIRE(j.rows() == 2);
    REQUIRE(j.cols() == 3);
    CHECK(oracles::svd_spectral_norm(j - AB) < 0.1);
    CHECK((m.state_jacobian(s, a) - j.leftCols(2)).norm() == 0.0);
    // next_state = s + predict
    CHECK((m.next_state(s, a) - (s + m.predict(s, a))).norm() < 1e-14);
  }
}

TEST_CASE("raw-unit jacobian matches finite differences of predict") {
  DynamicsModel m = fit_linear(small_linear(), 10, 120);
  Vec s(2), a(1);
  s << 0.4, -0.2;
  a << 0.3;
  Mat fd = oracles::fd_jacobian(
      [&](const Vec& x) { return m.predict(x.head(2), x.tail(1)); },
      (Vec(3) << s, a).finished());
  Mat jac = m.jacobian(s, a);
  CHECK((jac - fd).norm() / (fd.norm() + 1e-12) < 1e-6);
}

TEST_CASE("constant transitions train to near-zero error") {
  // every state change is the same vector; the residual is a constant map
  std::vector<Trajectory> trajs;
  Vec delta(2);
  delta << 0.3, -0.1;
  for (int k = 0; k < 3; ++k) {
    Trajectory tr;
    Vec s(2);
    s << k * 0.5, -k * 0.2;
    for (int t = 0; t < 10; ++t) {
      Vec a = Vec::Constant(1, 0.1 * t);
      tr.push_back({s, a, s + delta});
      s = s + delta;
    }
    trajs.push_back(tr);
  }
  DynamicsTrainOptions opts;
  opts.hidden = {16};
  opts.train.seed = 4;
  opts.train.epochs = 3000;
  opts.train.learning_rate = 5e-3;
  auto r = train_dynamics(TrajectoryDataset(trajs),
                          nn::SpectralConstraint::unbounded(), opts);
  CHECK(r.model.eps_max() < 1e-3);
  CHECK((r.model.predict(trajs[0][0].s, trajs[0][0].a) - delta).norm() < 1e-3);
}

TEST_CASE("local_lipschitz equals the state-block spectral norm") {
  DynamicsModel m = fit_linear(small_linear(), 10, 150);
  Vec s(2), a(1);
  s << -0.3, 0.8;
  a << -0.5;
  const double got = local_lipschitz(m, s, a);
  const double want = oracles::svd_spectral_norm(m.state_jacobian(s, a));
  CHECK(got == doctest::Approx(want).epsilon(1e-8));

  // directional lower bound: any unit direction's gain is <= the norm
  Vec d(2);
  d << 1.0, 0.0;
  const double h = 1e-6;
  const Vec lo = m.predict(s - h * d, a), hi = m.predict(s + h * d, a);
  CHECK((hi - lo).norm() / (2 * h) <= got * (1 + 1e-4) + 1e-9);
}

TEST_CASE("trained under a cap, every layer respects the per-layer bound") {
  LinearSystem sys = small_linear();
  TrajectoryDataset data = sys.make_data(10, 15, 2);
  for (double cap : {0.5, 1.0, 2.0, 4.0}) {
    DynamicsTrainOptions opts;
    opts.hidden = {16};
    opts.train.seed = 3;
    opts.train.epochs = 60;
    auto m = train_dynamics(data, nn::SpectralConstraint::with_cap(cap), opts)
                 .model;
    const double lc =
        m.constraint().layer_cap(m.net().n_layers());
    for (const auto& layer : m.net().layers()) {
      CHECK(oracles::svd_spectral_norm(layer.W) <= lc + nn::kSpectralTol);
    }
  }
}

TEST_CASE("save/load round trip preserves predictions bit-exactly") {
  DynamicsModel m = fit_linear(small_linear(), 6, 80);
  const std::string path = tmp_path("ccil_dyn_roundtrip.json");
  m.save(path);
  DynamicsModel back = DynamicsModel::load(path);
  std::remove(path.c_str());

  CHECK(back.state_dim() == 2);
  CHECK(back.action_dim() == 1);
  CHECK(back.eps_train() == m.eps_train());
  CHECK(back.eps_max() == m.eps_max());
  CHECK(back.constraint().bounded() == m.constraint().bounded());
  Vec s(2), a(1);
  s << 0.2, 0.1;
  a << -0.4;
  CHECK((back.predict(s, a) - m.predict(s, a)).norm() == 0.0);
}

TEST_CASE("holdout fraction reports an error without shrinking eps coverage") {
  LinearSystem sys = small_linear();
  TrajectoryDataset data = sys.make_data(10, 15, 9);
  DynamicsTrainOptions opts;
  opts.hidden = {32};
  opts.train.seed = 1;
  opts.train.epochs = 150;
  opts.holdout_fraction = 0.2;
  auto r = train_dynamics(data, nn::SpectralConstraint::unbounded(), opts);
  REQUIRE(r.eps_holdout.has_value());
  CHECK(*r.eps_holdout >= 0.0);
  CHECK(*r.eps_holdout < 0.1);
}

TEST_CASE("lipschitz_distribution summarizes per-transition coefficients") {
  LinearSystem sys = small_linear();
  TrajectoryDataset data = sys.make_data(5, 10, 11);
  DynamicsModel m = fit_linear(sys, 10, 150);
  LipschitzSummary sum = lipschitz_distribution(m, data, 8);
  REQUIRE(sum.values.size() == data.n_transitions());
  CHECK(sum.q025 <= sum.q500);
  CHECK(sum.q500 <= sum.q975);
  CHECK(sum.hist.counts.size() == 8);
  // on a linear system all coefficients concentrate near ||A||
  const double truth = oracles::svd_spectral_norm(sys.A);
  CHECK(sum.mean == doctest::Approx(truth).epsilon(0.5));
  // values are in flatten order: spot-check the first one
  const auto flat = data.flatten();
  CHECK(sum.values[0] ==
        doctest::Approx(local_lipschitz(m, flat[0]->s, flat[0]->a))
            .epsilon(1e-12));
}

TEST_CASE("training input validation") {
  DynamicsTrainOptions opts;
  CHECK_THROWS_AS(
      train_dynamics(TrajectoryDataset(), nn::SpectralConstraint::unbounded(),
                     opts),
      InputError);
  opts.holdout_fraction = 1.5;
  CHECK_THROWS_AS(train_dynamics(small_linear().make_data(2, 5, 0),
                                 nn::SpectralConstraint::unbounded(), opts),
                  ConfigError);
}
