#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "ccil/labels.hpp"
#include "support/oracles.hpp"

using namespace ccil;

namespace {

// A model whose residual map is f(s, a) = W [s; a] exactly: one affine layer,
// identity normalizers. Every label quantity then has a closed form.
DynamicsModel exact_model(const Mat& A, const Mat& B) {
  nn::Mlp::Layer lay;
  lay.W = Mat(A.rows(), A.cols() + B.cols());
  lay.W << A, B;
  lay.b = Vec::Zero(A.rows());
  nn::Mlp net({lay}, nn::Activation::Identity);
  return DynamicsModel(std::move(net), nn::SpectralConstraint::unbounded(),
                       Normalizer::identity(static_cast<int>(lay.W.cols())),
                       Normalizer::identity(static_cast<int>(A.rows())),
                       static_cast<int>(A.rows()), static_cast<int>(B.cols()));
}

TrajectoryDataset synth_data(int state_dim, int action_dim, int n_traj,
                              int len, std::uint64_t seed) {
  rng::Engine g(seed);
  std::vector<Trajectory> trajs;
  for (int k = 0; k < n_traj; ++k) {
    Trajectory tr;
    Vec s(state_dim);
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rng::normal(g);
    for (int t = 0; t < len; ++t) {
      Vec a(action_dim), s_next(state_dim);
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng::normal(g);
      for (Eigen::Index i = 0; i < s_next.size(); ++i) {
        s_next[i] = s[i] + 0.3 * rng::normal(g);
      }
      tr.push_back({s, a, s_next});
      s = s_next;
    }
    trajs.push_back(std::move(tr));
  }
  return TrajectoryDataset(std::move(trajs));
}

CorrectiveLabel make_label(double bound, int traj, int step) {
  CorrectiveLabel lab;
  lab.s_g = Vec::Constant(2, 0.1 * bound);
  lab.a_g = Vec::Constant(1, 0.5);
  lab.s_star = Vec::Zero(2);
  lab.traj = traj;
  lab.step = step;
  lab.distance = bound;  // local_l = 1
  lab.local_l = 1.0;
  lab.bound = bound;
  lab.finite = true;
  return lab;
}

std::vector<std::pair<int, int>> sources(const std::vector<CorrectiveLabel>& v) {
  std::vector<std::pair<int, int>> out;
  for (const auto& lab : v) out.emplace_back(lab.traj, lab.step);
  std::sort(out.begin(), out.end());
  return out;
}

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("exact linear model: closed-form labels") {
  Mat A(2, 2), B(2, 1);
  A << 0.10, 0.00, 0.05, -0.10;
  B << 0.20, 0.10;
  DynamicsModel m = exact_model(A, B);
  TrajectoryDataset data = synth_data(2, 1, 3, 4, 11);

  auto labels = gen_labels(m, data);
  REQUIRE(labels.size() == data.n_transitions());

  const double norm_a = oracles::svd_spectral_norm(A);
  std::size_t k = 0;
  const auto& trajs = data.trajectories();
  for (std::size_t ti = 0; ti < trajs.size(); ++ti) {
    for (std::size_t t = 0; t < trajs[ti].size(); ++t, ++k) {
      const Transition& tr = trajs[ti][t];
      const CorrectiveLabel& lab = labels[k];
      const Vec residual = A * tr.s + B * tr.a;

      CHECK(lab.traj == static_cast<int>(ti));
      CHECK(lab.step == static_cast<int>(t));
      CHECK(lab.a_g == tr.a);
      CHECK(lab.s_star == tr.s);
      CHECK((lab.s_g - (tr.s - residual)).norm() < 1e-12);
      CHECK(lab.distance == doctest::Approx(residual.norm()).epsilon(1e-12));
      CHECK(lab.local_l == doctest::Approx(norm_a).epsilon(1e-7));
      CHECK(lab.bound == doctest::Approx(lab.local_l * lab.distance));
      CHECK(lab.finite);
      CHECK_FALSE(lab.accepted);

      // Replaying the expert action from the generated state must land back
      // on s* up to the advertised bound; for a linear f the gap is exactly
      // -A * residual.
      const Vec err = m.next_state(lab.s_g, lab.a_g) - lab.s_star;
      CHECK((err + A * residual).norm() < 1e-12);
      CHECK(err.norm() <= lab.bound + 1e-12);
    }
  }
}

TEST_CASE("zero model: labels collapse onto the demonstrations") {
  DynamicsModel m = exact_model(Mat::Zero(2, 2), Mat::Zero(2, 1));
  TrajectoryDataset data = synth_data(2, 1, 2, 3, 5);

  auto labels = gen_labels(m, data);
  for (const auto& lab : labels) {
    CHECK(lab.s_g == lab.s_star);
    CHECK(lab.distance == 0.0);
    CHECK(lab.local_l == 0.0);
    CHECK(lab.bound == 0.0);
    CHECK(lab.finite);
  }

  // All bounds tie at zero: q = 1 keeps everything, any interior quantile
  // puts sigma on the tie and the strict comparison rejects all of them.
  auto all = filter_labels(labels, FilterConfig::by_quantile(1.0));
  CHECK(all.accepted.size() == labels.size());
  CHECK(std::isinf(all.sigma));

  auto half = filter_labels(labels, FilterConfig::by_quantile(0.5));
  CHECK(half.accepted.empty());
  CHECK(half.sigma == 0.0);
  CHECK(half.n_considered == labels.size());
}

TEST_CASE("non-finite predictions are flagged and never accepted") {
  Mat A(2, 2), B(2, 1);
  A << std::numeric_limits<double>::infinity(), 0, 0, 0.1;
  B << 0, 0;
  DynamicsModel m = exact_model(A, B);
  TrajectoryDataset data = synth_data(2, 1, 1, 2, 9);

  auto labels = gen_labels(m, data);
  for (const auto& lab : labels) CHECK_FALSE(lab.finite);
  CHECK_THROWS_AS(filter_labels(labels, FilterConfig::by_quantile(0.5)),
                  InputError);
  CHECK_THROWS_AS(label_error_cdf(labels), InputError);
}

TEST_CASE("quantile filter keeps the exact sorted prefix") {
  // Bounds 1..10 handed over in scrambled order.
  const int scrambled[] = {7, 2, 9, 4, 1, 10, 5, 8, 3, 6};
  std::vector<CorrectiveLabel> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(make_label(scrambled[i], 0, i));

  auto r = filter_labels(labels, FilterConfig::by_quantile(0.5));
  CHECK(r.n_considered == 10);
  CHECK(r.sigma == 6.0);
  REQUIRE(r.accepted.size() == 5);
  for (const auto& lab : r.accepted) {
    CHECK(lab.bound <= 5.0);
    CHECK(lab.accepted);
  }
  REQUIRE(r.rejected.size() == 5);
  for (const auto& lab : r.rejected) {
    CHECK(lab.bound >= 6.0);
    CHECK_FALSE(lab.accepted);
  }

  auto none = filter_labels(labels, FilterConfig::by_quantile(0.0));
  CHECK(none.accepted.empty());
  CHECK(none.sigma == 1.0);

  auto all = filter_labels(labels, FilterConfig::by_quantile(1.0));
  CHECK(all.accepted.size() == 10);
  CHECK(all.rejected.empty());

  auto r3 = filter_labels(labels, FilterConfig::by_quantile(0.3));
  CHECK(r3.sigma == 4.0);
  CHECK(r3.accepted.size() == 3);

  // Acceptance grows monotonically and stays a prefix of the sorted bounds.
  std::size_t prev = 0;
  for (double q : {0.0, 0.1, 0.25, 0.4, 0.5, 0.75, 0.9, 1.0}) {
    auto rq = filter_labels(labels, FilterConfig::by_quantile(q));
    CHECK(rq.accepted.size() >= prev);
    prev = rq.accepted.size();
    double max_acc = 0.0, min_rej = std::numeric_limits<double>::infinity();
    for (const auto& lab : rq.accepted) max_acc = std::max(max_acc, lab.bound);
    for (const auto& lab : rq.rejected) min_rej = std::min(min_rej, lab.bound);
    CHECK(max_acc < min_rej);
  }
}

TEST_CASE("ties at the threshold are rejected, independent of input order") {
  std::vector<CorrectiveLabel> labels = {
      make_label(2.0, 0, 1), make_label(9.0, 0, 2), make_label(1.0, 0, 3),
      make_label(2.0, 1, 0), make_label(2.0, 1, 1)};

  auto r = filter_labels(labels, FilterConfig::by_quantile(0.5));
  CHECK(r.sigma == 2.0);
  REQUIRE(r.accepted.size() == 1);
  CHECK(r.accepted[0].bound == 1.0);

  std::reverse(labels.begin(), labels.end());
  auto r2 = filter_labels(labels, FilterConfig::by_quantile(0.5));
  CHECK(r2.sigma == r.sigma);
  CHECK(sources(r2.accepted) == sources(r.accepted));
  CHECK(sources(r2.rejected) == sources(r.rejected));
}

TEST_CASE("non-finite labels are excluded before the quantile is taken") {
  std::vector<CorrectiveLabel> labels;
  for (int i = 1; i <= 4; ++i) labels.push_back(make_label(i, 0, i));
  CorrectiveLabel bad = make_label(0.5, 9, 9);
  bad.s_g[0] = std::numeric_limits<double>::quiet_NaN();
  bad.finite = false;
  labels.push_back(bad);

  auto r = filter_labels(labels, FilterConfig::by_quantile(0.5));
  CHECK(r.n_considered == 4);
  CHECK(r.sigma == 3.0);  // quantile over {1,2,3,4}, not over 5 entries
  CHECK(r.accepted.size() == 2);
  bool saw_bad = false;
  for (const auto& lab : r.rejected) {
    if (lab.traj == 9) {
      saw_bad = true;
      CHECK_FALSE(lab.accepted);
    }
  }
  CHECK(saw_bad);
}

TEST_CASE("bound offset shifts sigma but not the quantile ranking") {
  std::vector<CorrectiveLabel> labels;
  for (int i = 1; i <= 10; ++i) labels.push_back(make_label(i, 0, i));

  auto base = filter_labels(labels, FilterConfig::by_quantile(0.5));
  auto cfg = FilterConfig::by_quantile(0.5);
  cfg.bound_offset = 10.0;
  auto shifted = filter_labels(labels, cfg);
  CHECK(shifted.sigma == base.sigma + 10.0);
  CHECK(sources(shifted.accepted) == sources(base.accepted));

  // Absolute mode: the offset does change decisions.
  auto abs0 = filter_labels(labels, FilterConfig::by_sigma(2.5));
  CHECK(abs0.accepted.size() == 2);
  CHECK(abs0.sigma == 2.5);
  auto abs_cfg = FilterConfig::by_sigma(2.5);
  abs_cfg.bound_offset = 1.0;
  auto abs1 = filter_labels(labels, abs_cfg);
  CHECK(abs1.accepted.size() == 1);
}

TEST_CASE("label error cdf") {
  std::vector<CorrectiveLabel> labels = {make_label(3, 0, 0), make_label(1, 0, 1),
                                         make_label(4, 0, 2), make_label(2, 0, 3)};
  LabelCdf cdf = label_error_cdf(labels);
  REQUIRE(cdf.sorted_bounds.size() == 4);
  CHECK(cdf.sorted_bounds == std::vector<double>{1, 2, 3, 4});
  CHECK(cdf.cum_fraction == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(cdf.quantile(0.5) == doctest::Approx(2.5));
  CHECK(cdf.quantile(0.0) == doctest::Approx(1.0));
  CHECK(cdf.quantile(1.0) == doctest::Approx(4.0));

  CorrectiveLabel bad = make_label(99, 1, 0);
  bad.finite = false;
  labels.push_back(bad);
  CHECK(label_error_cdf(labels).sorted_bounds.size() == 4);
}

TEST_CASE("labels round trip through jsonl") {
  Mat A(2, 2), B(2, 1);
  A << 0.10, 0.00, 0.05, -0.10;
  B << 0.20, 0.10;
  DynamicsModel m = exact_model(A, B);
  TrajectoryDataset data = synth_data(2, 1, 2, 5, 21);

  auto r = filter_labels(gen_labels(m, data), FilterConfig::by_quantile(0.5));
  std::vector<CorrectiveLabel> labels = r.accepted;
  labels.insert(labels.end(), r.rejected.begin(), r.rejected.end());

  const std::string path = tmp_path("ccil_labels_roundtrip.jsonl");
  save_labels_jsonl(path, labels);
  auto loaded = load_labels_jsonl(path);
  REQUIRE(loaded.size() == labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CHECK(loaded[i].s_g == labels[i].s_g);
    CHECK(loaded[i].a_g == labels[i].a_g);
    CHECK(loaded[i].s_star == labels[i].s_star);
    CHECK(loaded[i].distance == labels[i].distance);
    CHECK(loaded[i].bound == labels[i].bound);
    CHECK(loaded[i].accepted == labels[i].accepted);
    CHECK(loaded[i].traj == labels[i].traj);
    CHECK(loaded[i].step == labels[i].step);
    CHECK(loaded[i].local_l ==
          doctest::Approx(labels[i].local_l).epsilon(1e-12));
    CHECK(loaded[i].finite);
  }
  std::filesystem::remove(path);

  // Zero-distance labels reload with local_l pinned to zero.
  DynamicsModel zero = exact_model(Mat::Zero(2, 2), Mat::Zero(2, 1));
  auto zl = gen_labels(zero, data);
  const std::string zpath = tmp_path("ccil_labels_zero.jsonl");
  save_labels_jsonl(zpath, zl);
  for (const auto& lab : load_labels_jsonl(zpath)) CHECK(lab.local_l == 0.0);
  std::filesystem::remove(zpath);
}

TEST_CASE("validation and io errors") {
  CHECK_THROWS_AS(FilterConfig{}.validate(), ConfigError);
  FilterConfig both;
  both.quantile = 0.5;
  both.absolute_sigma = 1.0;
  CHECK_THROWS_AS(both.validate(), ConfigError);
  CHECK_THROWS_AS(FilterConfig::by_quantile(-0.1).validate(), InputError);
  CHECK_THROWS_AS(FilterConfig::by_quantile(1.5).validate(), InputError);
  CHECK_THROWS_AS(FilterConfig::by_sigma(0.0).validate(), InputError);
  auto neg = FilterConfig::by_quantile(0.5);
  neg.bound_offset = -1.0;
  CHECK_THROWS_AS(neg.validate(), InputError);

  CHECK_THROWS_AS(filter_labels({}, FilterConfig::by_quantile(0.5)), InputError);
  CHECK_THROWS_AS(label_error_cdf({}), InputError);

  Mat A(2, 2), B(2, 1);
  A.setZero();
  B.setZero();
  DynamicsModel m = exact_model(A, B);
  TrajectoryDataset mismatched = synth_data(3, 1, 1, 2, 1);
  CHECK_THROWS_AS(gen_labels(m, mismatched), InputError);

  CHECK_THROWS_AS(save_labels_jsonl("/nonexistent/dir/x.jsonl", {}), IoError);
  CHECK_THROWS_AS(load_labels_jsonl(tmp_path("ccil_missing_labels.jsonl")),
                  IoError);
  const std::string badpath = tmp_path("ccil_bad_labels.jsonl");
  {
    std::ofstream out(badpath);
    out << "{not json\n";
  }
  CHECK_THROWS_AS(load_labels_jsonl(badpath), InputError);
  std::filesystem::remove(badpath);
}
