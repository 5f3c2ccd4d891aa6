// Command-line front end for the imitation-learning pipeline. Every stage
// reads and writes plain files, so stages can be re-run and inspected in
// isolation; nothing is cached between invocations.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccil/dynamics.hpp"
#include "ccil/envs.hpp"
#include "ccil/experiments.hpp"
#include "ccil/labels.hpp"
#include "ccil/nn/serialize.hpp"
#include "ccil/policy.hpp"

namespace {

using namespace ccil;
using nlohmann::json;
using nlohmann::ordered_json;

struct TrainFlags {
  std::vector<int> hidden;
  int epochs = 400;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd, std::vector<int> default_hidden) {
    hidden = std::move(default_hidden);
    cmd->add_option("--hidden", hidden, "hidden layer sizes")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", batch, "mini-batch size")->capture_default_str();
    cmd->add_option("--lr", lr, "learning rate")->capture_default_str();
    cmd->add_option("--seed", seed, "training seed")->required();
  }

  nn::TrainConfig config() const {
    nn::TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    return cfg;
  }
};

int cmd_collect(const std::string& env_name, int n, std::uint64_t seed,
                const std::string& out) {
  auto env = make_env(env_name);
  TrajectoryDataset data = collect(*env, scripted_expert(*env), n, seed);
  data.save_jsonl(out);
  std::printf("collected %d trajectories (%zu transitions) from %s -> %s\n", n,
              data.n_transitions(), env_name.c_str(), out.c_str());
  return 0;
}

int cmd_train_dynamics(const std::string& data_path, const std::string& out,
                       const TrainFlags& tf, std::optional<double> cap,
                       double holdout) {
  TrajectoryDataset data = TrajectoryDataset::load_jsonl(data_path);
  DynamicsTrainOptions opts;
  opts.hidden = tf.hidden;
  opts.train = tf.config();
  opts.holdout_fraction = holdout;
  const auto constraint = cap ? nn::SpectralConstraint::with_cap(*cap)
                              : nn::SpectralConstraint::unbounded();
  DynamicsTrainResult res = train_dynamics(data, constraint, opts);
  res.model.save(out);
  std::printf("trained dynamics on %zu transitions: loss %.6g, eps_train %.6g, "
              "eps_max %.6g",
              data.n_transitions(), res.final_loss, res.model.eps_train(),
              res.model.eps_max());
  if (res.eps_holdout) std::printf(", holdout %.6g", *res.eps_holdout);
  std::printf(" -> %s\n", out.c_str());
  return 0;
}

int cmd_analyze_continuity(const std::string& model_path,
                           const std::string& data_path, const std::string& out,
                           const std::string& env_name) {
  DynamicsModel model = DynamicsModel::load(model_path);
  TrajectoryDataset data = TrajectoryDataset::load_jsonl(data_path);
  LipschitzSummary summary = lipschitz_distribution(model, data);

  ordered_json j;
  j["n_transitions"] = summary.values.size();
  j["mean"] = summary.mean;
  j["q025"] = summary.q025;
  j["q500"] = summary.q500;
  j["q975"] = summary.q975;
  j["eps_train"] = model.eps_train();
  j["eps_max"] = model.eps_max();
  j["histogram"] = {{"edges", summary.hist.edges},
                    {"counts", summary.hist.counts}};

  if (!env_name.empty()) {
    // Split the distribution by the simulator's contact flag.
    auto env = make_env(env_name);
    const std::vector<bool> flags = contact_flags(*env, data);
    std::vector<double> contact, free_space;
    for (std::size_t i = 0; i < flags.size(); ++i) {
      (flags[i] ? contact : free_space).push_back(summary.values[i]);
    }
    j["contact"] = {{"n", contact.size()},
                    {"mean", contact.empty() ? 0.0 : stats::mean(contact)}};
    j["free_space"] = {
        {"n", free_space.size()},
        {"mean", free_space.empty() ? 0.0 : stats::mean(free_space)}};
  }
  save_json_file(out, j);
  std::printf("local Lipschitz over %zu transitions: mean %.6g, middle 95%% "
              "[%.6g, %.6g] -> %s\n",
              summary.values.size(), summary.mean, summary.q025, summary.q975,
              out.c_str());
  return 0;
}

int cmd_gen_labels(const std::string& model_path, const std::string& data_path,
                   const std::string& out, std::optional<double> quantile,
                   std::optional<double> sigma, bool include_train_error) {
  DynamicsModel model = DynamicsModel::load(model_path);
  TrajectoryDataset data = TrajectoryDataset::load_jsonl(data_path);
  std::vector<CorrectiveLabel> labels = gen_labels(model, data);

  FilterConfig cfg;
  cfg.quantile = quantile;
  cfg.absolute_sigma = sigma;
  if (include_train_error) cfg.bound_offset = model.eps_max();
  FilterResult res = filter_labels(std::move(labels), cfg);

  std::vector<CorrectiveLabel> all;
  all.reserve(res.accepted.size() + res.rejected.size());
  all.insert(all.end(), res.accepted.begin(), res.accepted.end());
  all.insert(all.end(), res.rejected.begin(), res.rejected.end());
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.traj != b.traj ? a.traj < b.traj : a.step < b.step;
  });
  save_labels_jsonl(out, all);
  std::printf("generated %zu labels, accepted %zu (sigma %.6g) -> %s\n",
              all.size(), res.accepted.size(), res.sigma, out.c_str());
  return 0;
}

int cmd_train_policy(const std::string& data_path,
                     const std::string& labels_path, const std::string& out,
                     const TrainFlags& tf, const std::string& space,
                     const std::vector<double>& alphas, double gen_weight) {
  TrajectoryDataset data = TrajectoryDataset::load_jsonl(data_path);
  std::vector<CorrectiveLabel> accepted;
  if (!labels_path.empty()) {
    for (auto& lab : load_labels_jsonl(labels_path)) {
      if (lab.accepted) accepted.push_back(std::move(lab));
    }
  }
  PolicyTrainOptions opts;
  opts.hidden = tf.hidden;
  opts.train = tf.config();
  opts.space = action_space_from_string(space);
  if (alphas.size() != 3) throw ConfigError("--alpha needs three values");
  opts.weights = {alphas[0], alphas[1], alphas[2]};
  PolicyTrainResult res =
      train_policy(AugmentedDataset::from(data, accepted, gen_weight), opts);
  res.model.save(out);
  std::printf("trained policy on %zu expert + %zu generated pairs: loss %.6g "
              "-> %s\n",
              data.n_transitions(), accepted.size(), res.final_loss,
              out.c_str());
  return 0;
}

int cmd_evaluate(const std::string& env_name, const std::string& policy_path,
                 int trials, double noise, std::uint64_t seed,
                 const std::string& out) {
  auto env = make_env(env_name);
  PolicyModel policy = PolicyModel::load(policy_path);
  EvalResult res = evaluate(
      *env, [&policy](const Vec& s) { return policy.act(s); }, trials, noise,
      seed);
  std::printf("%s: %d/%d successes (rate %.4f) at noise %.4g\n",
              env_name.c_str(), res.successes, res.trials, res.rate(), noise);
  if (!out.empty()) {
    ordered_json j;
    j["env"] = env_name;
    j["trials"] = res.trials;
    j["successes"] = res.successes;
    j["rate"] = res.rate();
    j["noise_scale"] = noise;
    j["seed"] = seed;
    save_json_file(out, j);
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir,
               int jobs) {
  AblationConfig cfg = AblationConfig::load(config_path);
  AblationReport report = run_ablation(cfg, jobs);
  emit_report(report, out_dir);
  std::printf("ablation over %zu cells -> %s\n", report.cells.size(),
              out_dir.c_str());
  return 0;
}

int cmd_report(const std::string& report_path) {
  AblationReport report = load_report(report_path);
  std::printf("report %s (config hash %llu)\n", report.version.c_str(),
              static_cast<unsigned long long>(report.config_hash));
  std::printf("%6s %8s %9s %7s %8s %8s %8s %6s\n", "n", "cap", "quantile",
              "bc", "ccil", "z", "p", "sig");
  for (const auto& c : report.cells) {
    const int n = c.pooled_trials();
    char cap[32];
    std::snprintf(cap, sizeof cap, "%g", c.cap);
    std::printf("%6d %8s %9.3g %6.1f%% %7.1f%% %8.3f %8.2g %6s\n", c.n_traj,
                cap, c.quantile, 100.0 * c.bc_successes / n,
                100.0 * c.ccil_successes / n, c.z, c.p, c.stars.c_str());
  }
  std::printf("note: %s\n", report.note.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corrective-label imitation learning pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // collect
  auto* collect_cmd =
      app.add_subcommand("collect", "roll out the scripted expert");
  std::string c_env, c_out;
  int c_n = 10;
  std::uint64_t c_seed = 0;
  collect_cmd->add_option("--env", c_env, "environment name")->required();
  collect_cmd->add_option("--n", c_n, "number of successful trajectories")
      ->required();
  collect_cmd->add_option("--seed", c_seed, "sampling seed")->required();
  collect_cmd->add_option("--out", c_out, "output trajectory JSONL")->required();

  // train-dynamics
  auto* dyn_cmd =
      app.add_subcommand("train-dynamics", "fit the residual dynamics model");
  std::string d_data, d_out;
  TrainFlags d_tf;
  double d_cap = 0.0;
  double d_holdout = 0.0;
  dyn_cmd->add_option("--data", d_data, "trajectory JSONL")->required();
  dyn_cmd->add_option("--out", d_out, "output model JSON")->required();
  d_tf.attach(dyn_cmd, {64});
  auto* cap_opt = dyn_cmd->add_option(
      "--cap", d_cap, "Lipschitz cap (omit for unconstrained)");
  dyn_cmd->add_option("--holdout", d_holdout,
                      "diagnostic holdout fraction in [0, 1)");

  // analyze-continuity
  auto* cont_cmd = app.add_subcommand(
      "analyze-continuity", "local Lipschitz distribution of a trained model");
  std::string ac_model, ac_data, ac_out, ac_env;
  cont_cmd->add_option("--model", ac_model, "dynamics model JSON")->required();
  cont_cmd->add_option("--data", ac_data, "trajectory JSONL")->required();
  cont_cmd->add_option("--out", ac_out, "output summary JSON")->required();
  cont_cmd->add_option("--env", ac_env,
                       "also split by the named simulator's contact flag");

  // gen-labels
  auto* gen_cmd = app.add_subcommand(
      "gen-labels", "generate and filter corrective labels");
  std::string g_model, g_data, g_out;
  double g_quantile = 0.0, g_sigma = 0.0;
  bool g_train_err = false;
  gen_cmd->add_option("--model", g_model, "dynamics model JSON")->required();
  gen_cmd->add_option("--data", g_data, "trajectory JSONL")->required();
  gen_cmd->add_option("--out", g_out, "output label JSONL")->required();
  auto* q_opt =
      gen_cmd->add_option("--quantile", g_quantile, "rejection quantile [0,1]");
  auto* s_opt =
      gen_cmd->add_option("--sigma", g_sigma, "absolute error-bound threshold");
  q_opt->excludes(s_opt);
  gen_cmd->add_flag("--include-train-error", g_train_err,
                    "add eps_max to every bound (conservative mode)");

  // train-policy
  auto* pol_cmd = app.add_subcommand(
      "train-policy", "behavior-clone a policy, optionally with labels");
  std::string p_data, p_labels, p_out, p_space = "raw";
  TrainFlags p_tf;
  std::vector<double> p_alphas = {1.0, 1.0, 1.0};
  double p_gen_weight = 1.0;
  pol_cmd->add_option("--data", p_data, "expert trajectory JSONL")->required();
  pol_cmd->add_option("--labels", p_labels,
                      "label JSONL; accepted labels join the training set");
  pol_cmd->add_option("--out", p_out, "output policy JSON")->required();
  p_tf.attach(pol_cmd, {64, 64});
  pol_cmd->add_option("--space", p_space, "action space: raw or pose")
      ->capture_default_str();
  pol_cmd->add_option("--alpha", p_alphas,
                      "loss weights: position, rotation, gripper")
      ->delimiter(',')
      ->expected(3);
  pol_cmd->add_option("--generated-weight", p_gen_weight,
                      "sample weight for generated pairs")
      ->capture_default_str();

  // evaluate
  auto* eval_cmd =
      app.add_subcommand("evaluate", "roll a policy out on the initial grid");
  std::string e_env, e_policy, e_out;
  int e_trials = 48;
  double e_noise = 0.0;
  std::uint64_t e_seed = 0;
  eval_cmd->add_option("--env", e_env, "environment name")->required();
  eval_cmd->add_option("--policy", e_policy, "policy JSON")->required();
  eval_cmd->add_option("--trials", e_trials, "number of rollouts")
      ->capture_default_str();
  eval_cmd->add_option("--noise", e_noise, "observation noise scale")
      ->capture_default_str();
  eval_cmd->add_option("--seed", e_seed, "noise seed")->required();
  eval_cmd->add_option("--out", e_out, "optional result JSON");

  // ablate
  auto* abl_cmd = app.add_subcommand(
      "ablate", "run the full grid (seeding comes from the config file)");
  std::string a_config, a_out;
  int a_jobs = 1;
  abl_cmd->add_option("--config", a_config, "ablation config JSON")->required();
  abl_cmd->add_option("--out", a_out, "report output directory")->required();
  abl_cmd->add_option("--jobs", a_jobs, "parallel workers")
      ->capture_default_str();

  // report
  auto* rep_cmd =
      app.add_subcommand("report", "print a human-readable report summary");
  std::string r_path;
  rep_cmd->add_option("--report", r_path, "path to report.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect_cmd->parsed()) return cmd_collect(c_env, c_n, c_seed, c_out);
    if (dyn_cmd->parsed()) {
      return cmd_train_dynamics(
          d_data, d_out, d_tf,
          cap_opt->count() ? std::optional<double>(d_cap) : std::nullopt,
          d_holdout);
    }
    if (cont_cmd->parsed()) {
      return cmd_analyze_continuity(ac_model, ac_data, ac_out, ac_env);
    }
    if (gen_cmd->parsed()) {
      return cmd_gen_labels(
          g_model, g_data, g_out,
          q_opt->count() ? std::optional<double>(g_quantile) : std::nullopt,
          s_opt->count() ? std::optional<double>(g_sigma) : std::nullopt,
          g_train_err);
    }
    if (pol_cmd->parsed()) {
      return cmd_train_policy(p_data, p_labels, p_out, p_tf, p_space, p_alphas,
                              p_gen_weight);
    }
    if (eval_cmd->parsed()) {
      return cmd_evaluate(e_env, e_policy, e_trials, e_noise, e_seed, e_out);
    }
    if (abl_cmd->parsed()) return cmd_ablate(a_config, a_out, a_jobs);
    if (rep_cmd->parsed()) return cmd_report(r_path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 5;
  } catch (const EnvError& e) {
    std::cerr << "environment error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 10;
  }
  return 0;
}
