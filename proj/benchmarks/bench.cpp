// Microbenchmarks for the hot paths: network forward/backward, spectral-norm
// estimation, simulator stepping, and label generation.
#include <benchmark/benchmark.h>

#include "ccil/dynamics.hpp"
#include "ccil/envs.hpp"
#include "ccil/labels.hpp"
#include "ccil/nn/spectral.hpp"
#include "ccil/nn/train.hpp"

namespace {

using namespace ccil;

nn::Mlp make_net(int in, int out) {
  return nn::Mlp::init({in, 64, 64, out}, nn::Activation::Tanh, 7);
}

Mat random_batch(int rows, int cols, std::uint64_t seed) {
  rng::Engine g(seed);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng::normal(g);
  return m;
}

void bm_forward(benchmark::State& state) {
  const nn::Mlp net = make_net(9, 3);
  const Mat x = random_batch(9, static_cast<int>(state.range(0)), 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_forward)->Arg(1)->Arg(64)->Arg(512);

void bm_backward(benchmark::State& state) {
  const nn::Mlp net = make_net(9, 3);
  const int batch = static_cast<int>(state.range(0));
  const Mat x = random_batch(9, batch, 12);
  const Mat y = random_batch(3, batch, 13);
  for (auto _ : state) {
    const auto trace = net.forward_trace(x);
    benchmark::DoNotOptimize(net.backward(trace, trace.post.back() - y));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_backward)->Arg(64)->Arg(512);

void bm_spectral_norm(benchmark::State& state) {
  const Mat w = random_batch(64, 64, 14);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::spectral_norm(w, 20));
  }
}
BENCHMARK(bm_spectral_norm);

void bm_jacobian(benchmark::State& state) {
  const nn::Mlp net = make_net(9, 7);
  const Vec x = random_batch(9, 1, 15).col(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.jacobian(x));
  }
}
BENCHMARK(bm_jacobian);

void bm_env_step(benchmark::State& state) {
  const auto env = make_env("wallgrasp");
  const Controller expert = scripted_expert(*env);
  rng::Engine g(16);
  Vec s = env->sample_initial(g);
  for (auto _ : state) {
    const Vec a = expert(s);
    const StepOut out = env->step(s, a);
    s = out.s_next;
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(bm_env_step);

void bm_gen_labels(benchmark::State& state) {
  const auto env = make_env("wallgrasp");
  const TrajectoryDataset data = collect(*env, scripted_expert(*env), 5, 17);
  DynamicsTrainOptions opts;
  opts.hidden = {64};
  opts.train.epochs = 20;
  opts.train.seed = 18;
  const DynamicsModel model =
      train_dynamics(data, nn::SpectralConstraint::unbounded(), opts).model;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen_labels(model, data));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(data.n_transitions()));
}
BENCHMARK(bm_gen_labels);

}  // namespace

BENCHMARK_MAIN();
