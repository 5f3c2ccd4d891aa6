#include "ccil/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "ccil/dynamics.hpp"
#include "ccil/nn/serialize.hpp"
#include "ccil/stats.hpp"

namespace ccil {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Caps are serialized as null when unbounded (JSON has no infinity); user
// configs may also spell it "inf" or "unbounded".
json cap_to_json(double cap) {
  if (std::isinf(cap)) return nullptr;
  return cap;
}

double cap_from_json(const json& j) {
  if (j.is_null()) return kInf;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "unbounded") return kInf;
    throw InputError("config: unrecognized cap value '" + s + "'");
  }
  return j.get<double>();
}

std::string fmt(double x, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

std::string cap_tag(double cap) {
  return std::isinf(cap) ? "inf" : fmt(cap, "%g");
}

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---- pipeline stages, all seeded through derive_seed --------------------

TrajectoryDataset stage_collect(const AblationConfig& cfg, int n_traj,
                                std::uint64_t seed_index) {
  auto env = make_env(cfg.env);
  return collect(*env, scripted_expert(*env), n_traj,
                 derive_seed(cfg.master_seed, cfg.env, n_traj, seed_index,
                             "collect"));
}

DynamicsTrainResult stage_dynamics(const AblationConfig& cfg,
                                   const TrajectoryDataset& data, double cap,
                                   int n_traj, std::uint64_t seed_index) {
  DynamicsTrainOptions opts;
  opts.hidden = cfg.dyn_hidden;
  opts.train.seed =
      derive_seed(cfg.master_seed, cfg.env, n_traj, seed_index, "dynamics");
  opts.train.epochs = cfg.dyn_epochs;
  opts.train.batch_size = cfg.dyn_batch;
  opts.train.learning_rate = cfg.dyn_lr;
  const auto constraint = std::isfinite(cap)
                              ? nn::SpectralConstraint::with_cap(cap)
                              : nn::SpectralConstraint::unbounded();
  return train_dynamics(data, constraint, opts);
}

// Shared by both arms: with an empty label set this trains the plain BC
// policy, and because the sub-seed does not depend on cap or quantile, a
// q=0 cell reproduces the BC policy bit-for-bit.
PolicyTrainResult stage_policy(const AblationConfig& cfg,
                               const TrajectoryDataset& data,
                               const std::vector<CorrectiveLabel>& accepted,
                               int n_traj, std::uint64_t seed_index) {
  PolicyTrainOptions opts;
  opts.hidden = cfg.policy_hidden;
  opts.train.seed =
      derive_seed(cfg.master_seed, cfg.env, n_traj, seed_index, "policy");
  opts.train.epochs = cfg.policy_epochs;
  opts.train.batch_size = cfg.policy_batch;
  opts.train.learning_rate = cfg.policy_lr;
  return train_policy(AugmentedDataset::from(data, accepted, cfg.generated_weight),
                      opts);
}

EvalResult stage_eval(const AblationConfig& cfg, const PolicyModel& policy,
                      int n_traj, std::uint64_t seed_index) {
  auto env = make_env(cfg.env);
  return evaluate(
      *env, [&policy](const Vec& s) { return policy.act(s); }, cfg.trials,
      cfg.noise_scale,
      derive_seed(cfg.master_seed, cfg.env, n_traj, seed_index, "eval"));
}

std::vector<int> json_to_ints(const json& j) {
  std::vector<int> out;
  for (const auto& v : j) out.push_back(v.get<int>());
  return out;
}

std::vector<double> json_to_doubles(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

}  // namespace

void AblationConfig::validate() const {
  const auto& names = env_names();
  if (std::find(names.begin(), names.end(), env) == names.end()) {
    throw ConfigError("ablation config: unknown env '" + env + "'");
  }
  if (sizes.empty() || quantiles.empty() || caps.empty() || seeds.empty()) {
    throw ConfigError("ablation config: sizes/quantiles/caps/seeds must be non-empty");
  }
  for (int n : sizes) {
    if (n < 1) throw ConfigError("ablation config: sizes must be >= 1");
  }
  for (double q : quantiles) {
    if (q < 0.0 || q > 1.0) {
      throw InputError("ablation config: quantiles must lie in [0, 1]");
    }
  }
  for (double c : caps) {
    if (!(c > 0.0)) throw ConfigError("ablation config: caps must be positive");
  }
  if (trials < 30) {
    throw ConfigError("ablation config: need trials >= 30 for z-test validity");
  }
  if (noise_scale < 0.0) {
    throw ConfigError("ablation config: noise_scale must be >= 0");
  }
  if (generated_weight <= 0.0) {
    throw ConfigError("ablation config: generated_weight must be positive");
  }
  if (dyn_epochs < 1 || dyn_batch < 1 || dyn_lr <= 0 || policy_epochs < 1 ||
      policy_batch < 1 || policy_lr <= 0) {
    throw ConfigError("ablation config: invalid training parameters");
  }
}

ordered_json AblationConfig::to_json() const {
  ordered_json j;
  j["env"] = env;
  j["sizes"] = sizes;
  j["quantiles"] = quantiles;
  json caps_j = json::array();
  for (double c : caps) caps_j.push_back(cap_to_json(c));
  j["caps"] = caps_j;
  j["trials"] = trials;
  j["seeds"] = seeds;
  j["master_seed"] = master_seed;
  j["noise_scale"] = noise_scale;
  j["generated_weight"] = generated_weight;
  j["dyn_hidden"] = dyn_hidden;
  j["dyn_epochs"] = dyn_epochs;
  j["dyn_batch"] = dyn_batch;
  j["dyn_lr"] = dyn_lr;
  j["policy_hidden"] = policy_hidden;
  j["policy_epochs"] = policy_epochs;
  j["policy_batch"] = policy_batch;
  j["policy_lr"] = policy_lr;
  return j;
}

AblationConfig AblationConfig::from_json(const json& j) {
  AblationConfig cfg;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("env", cfg.env);
  get("sizes", cfg.sizes);
  get("quantiles", cfg.quantiles);
  if (j.contains("caps")) {
    cfg.caps.clear();
    for (const auto& c : j.at("caps")) cfg.caps.push_back(cap_from_json(c));
  }
  get("trials", cfg.trials);
  get("seeds", cfg.seeds);
  get("master_seed", cfg.master_seed);
  get("noise_scale", cfg.noise_scale);
  get("generated_weight", cfg.generated_weight);
  get("dyn_hidden", cfg.dyn_hidden);
  get("dyn_epochs", cfg.dyn_epochs);
  get("dyn_batch", cfg.dyn_batch);
  get("dyn_lr", cfg.dyn_lr);
  get("policy_hidden", cfg.policy_hidden);
  get("policy_epochs", cfg.policy_epochs);
  get("policy_batch", cfg.policy_batch);
  get("policy_lr", cfg.policy_lr);
  cfg.validate();
  return cfg;
}

AblationConfig AblationConfig::load(const std::string& path) {
  return from_json(load_json_file(path));
}

std::uint64_t AblationConfig::hash() const { return fnv1a64(to_json().dump()); }

ZTest z_test(int successes_a, int successes_b, int n) {
  if (n < 1) throw InputError("z_test: n must be >= 1");
  if (successes_a < 0 || successes_a > n || successes_b < 0 || successes_b > n) {
    throw InputError("z_test: success counts must lie in [0, n]");
  }
  const double p1 = static_cast<double>(successes_a) / n;
  const double p2 = static_cast<double>(successes_b) / n;
  const double pooled = (successes_a + successes_b) / (2.0 * n);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (2.0 / n));
  ZTest out;
  if (se == 0.0) return out;  // both arms degenerate: no evidence either way
  out.z = (p1 - p2) / se;
  out.p = std::erfc(std::abs(out.z) / std::sqrt(2.0));  // two-sided
  return out;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "****";
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "ns";
}

int CellCounts::bc_total() const {
  int sum = 0;
  for (int c : bc_by_seed) sum += c;
  return sum;
}

int CellCounts::ccil_total() const {
  int sum = 0;
  for (int c : ccil_by_seed) sum += c;
  return sum;
}

CellCounts run_cell(const AblationConfig& cfg, int n_traj, double cap,
                    double quantile) {
  cfg.validate();
  CellCounts out;
  out.trials_per_seed = cfg.trials;
  double accepted_sum = 0.0;
  for (std::uint64_t seed_index : cfg.seeds) {
    const TrajectoryDataset data = stage_collect(cfg, n_traj, seed_index);
    const DynamicsModel model =
        stage_dynamics(cfg, data, cap, n_traj, seed_index).model;
    FilterResult filt = filter_labels(gen_labels(model, data),
                                      FilterConfig::by_quantile(quantile));
    accepted_sum += static_cast<double>(filt.accepted.size()) /
                    static_cast<double>(filt.n_considered);

    const PolicyModel bc = stage_policy(cfg, data, {}, n_traj, seed_index).model;
    const PolicyModel ccil =
        stage_policy(cfg, data, filt.accepted, n_traj, seed_index).model;
    out.bc_by_seed.push_back(stage_eval(cfg, bc, n_traj, seed_index).successes);
    out.ccil_by_seed.push_back(
        stage_eval(cfg, ccil, n_traj, seed_index).successes);
  }
  out.accepted_fraction = accepted_sum / static_cast<double>(cfg.seeds.size());
  return out;
}

AblationReport run_ablation(const AblationConfig& cfg, int jobs) {
  cfg.validate();
  const std::size_t NS = cfg.seeds.size();
  const std::size_t NN = cfg.sizes.size();
  const std::size_t NC = cfg.caps.size();
  const std::size_t NQ = cfg.quantiles.size();

  // Phase A: demonstrations and the BC arm, one unit per (size, seed).
  std::vector<TrajectoryDataset> datasets(NN * NS);
  std::vector<int> bc_counts(NN * NS);
  parallel_for(NN * NS, jobs, [&](std::size_t idx) {
    const std::size_t si = idx / NS, sj = idx % NS;
    const int n_traj = cfg.sizes[si];
    datasets[idx] = stage_collect(cfg, n_traj, cfg.seeds[sj]);
    const PolicyModel bc =
        stage_policy(cfg, datasets[idx], {}, n_traj, cfg.seeds[sj]).model;
    bc_counts[idx] = stage_eval(cfg, bc, n_traj, cfg.seeds[sj]).successes;
  });

  // Phase B: dynamics models, labels, and continuity measurements, one unit
  // per (size, cap, seed).
  struct BUnit {
    std::vector<CorrectiveLabel> labels;
    std::vector<double> lip_values;
    double eps_train = 0.0;
    double eps_max = 0.0;
  };
  std::vector<BUnit> units(NN * NC * NS);
  parallel_for(NN * NC * NS, jobs, [&](std::size_t idx) {
    const std::size_t si = idx / (NC * NS);
    const std::size_t ci = (idx / NS) % NC;
    const std::size_t sj = idx % NS;
    const TrajectoryDataset& data = datasets[si * NS + sj];
    const DynamicsModel model =
        stage_dynamics(cfg, data, cfg.caps[ci], cfg.sizes[si], cfg.seeds[sj])
            .model;
    BUnit& u = units[idx];
    u.labels = gen_labels(model, data);
    u.lip_values.reserve(u.labels.size());
    for (const auto& lab : u.labels) u.lip_values.push_back(lab.local_l);
    u.eps_train = model.eps_train();
    u.eps_max = model.eps_max();
  });

  // Phase C: the CCIL arm, one unit per (size, cap, quantile, seed).
  struct CUnit {
    int successes = 0;
    double accepted_fraction = 0.0;
  };
  std::vector<CUnit> cunits(NN * NC * NQ * NS);
  parallel_for(NN * NC * NQ * NS, jobs, [&](std::size_t idx) {
    const std::size_t si = idx / (NC * NQ * NS);
    const std::size_t ci = (idx / (NQ * NS)) % NC;
    const std::size_t qi = (idx / NS) % NQ;
    const std::size_t sj = idx % NS;
    const TrajectoryDataset& data = datasets[si * NS + sj];
    const BUnit& b = units[(si * NC + ci) * NS + sj];
    FilterResult filt = filter_labels(
        b.labels, FilterConfig::by_quantile(cfg.quantiles[qi]));
    const PolicyModel ccil =
        stage_policy(cfg, data, filt.accepted, cfg.sizes[si], cfg.seeds[sj])
            .model;
    CUnit& c = cunits[idx];
    c.successes = stage_eval(cfg, ccil, cfg.sizes[si], cfg.seeds[sj]).successes;
    c.accepted_fraction = static_cast<double>(filt.accepted.size()) /
                          static_cast<double>(filt.n_considered);
  });

  // Assembly, strictly in config order so the report is independent of jobs.
  AblationReport report;
  report.version = std::string(kVersion);
  report.config = cfg;
  report.config_hash = cfg.hash();
  report.note =
      "All evaluation trials are treated as independent by the z-test, "
      "including repeat trials of the same initial condition under different "
      "observation noise.";

  for (std::size_t si = 0; si < NN; ++si) {
    for (std::size_t ci = 0; ci < NC; ++ci) {
      for (std::size_t qi = 0; qi < NQ; ++qi) {
        CellResult cell;
        cell.n_traj = cfg.sizes[si];
        cell.cap = cfg.caps[ci];
        cell.quantile = cfg.quantiles[qi];
        cell.trials_per_seed = cfg.trials;
        double accepted_sum = 0.0;
        for (std::size_t sj = 0; sj < NS; ++sj) {
          cell.bc_by_seed.push_back(bc_counts[si * NS + sj]);
          const CUnit& c = cunits[((si * NC + ci) * NQ + qi) * NS + sj];
          cell.ccil_by_seed.push_back(c.successes);
          accepted_sum += c.accepted_fraction;
        }
        cell.bc_successes = std::accumulate(cell.bc_by_seed.begin(),
                                            cell.bc_by_seed.end(), 0);
        cell.ccil_successes = std::accumulate(cell.ccil_by_seed.begin(),
                                              cell.ccil_by_seed.end(), 0);
        cell.accepted_fraction = accepted_sum / static_cast<double>(NS);
        const ZTest zt =
            z_test(cell.ccil_successes, cell.bc_successes, cell.pooled_trials());
        cell.z = zt.z;
        cell.p = zt.p;
        cell.stars = significance_stars(zt.p);
        report.cells.push_back(std::move(cell));
      }

      ContinuityRow row;
      row.n_traj = cfg.sizes[si];
      row.cap = cfg.caps[ci];
      std::vector<double> pooled_lip;
      std::vector<double> pooled_bounds;
      double eps_sum = 0.0;
      for (std::size_t sj = 0; sj < NS; ++sj) {
        const BUnit& b = units[(si * NC + ci) * NS + sj];
        pooled_lip.insert(pooled_lip.end(), b.lip_values.begin(),
                          b.lip_values.end());
        for (const auto& lab : b.labels) {
          if (lab.finite) pooled_bounds.push_back(lab.bound);
        }
        eps_sum += b.eps_train;
        row.eps_max = std::max(row.eps_max, b.eps_max);
      }
      row.mean = stats::mean(pooled_lip);
      row.q025 = stats::quantile(pooled_lip, 0.025);
      row.q500 = stats::quantile(pooled_lip, 0.5);
      row.q975 = stats::quantile(pooled_lip, 0.975);
      row.eps_train_mean = eps_sum / static_cast<double>(NS);
      report.continuity.push_back(row);

      CdfRow cdf;
      cdf.n_traj = cfg.sizes[si];
      cdf.cap = cfg.caps[ci];
      std::sort(pooled_bounds.begin(), pooled_bounds.end());
      constexpr int kCdfPoints = 257;
      for (int i = 0; i < kCdfPoints; ++i) {
        const double f = static_cast<double>(i) / (kCdfPoints - 1);
        cdf.fractions.push_back(f);
        cdf.bounds.push_back(stats::quantile(pooled_bounds, f));
      }
      report.cdfs.push_back(std::move(cdf));
    }
  }
  return report;
}

ordered_json AblationReport::to_json() const {
  ordered_json j;
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["config"] = config.to_json();
  j["note"] = note;
  j["cells"] = ordered_json::array();
  for (const auto& c : cells) {
    ordered_json cj;
    cj["n_traj"] = c.n_traj;
    cj["cap"] = cap_to_json(c.cap);
    cj["quantile"] = c.quantile;
    cj["trials_per_seed"] = c.trials_per_seed;
    cj["bc_by_seed"] = c.bc_by_seed;
    cj["ccil_by_seed"] = c.ccil_by_seed;
    cj["bc_successes"] = c.bc_successes;
    cj["ccil_successes"] = c.ccil_successes;
    cj["z"] = c.z;
    cj["p"] = c.p;
    cj["stars"] = c.stars;
    cj["accepted_fraction"] = c.accepted_fraction;
    j["cells"].push_back(std::move(cj));
  }
  j["continuity"] = ordered_json::array();
  for (const auto& r : continuity) {
    ordered_json rj;
    rj["n_traj"] = r.n_traj;
    rj["cap"] = cap_to_json(r.cap);
    rj["mean"] = r.mean;
    rj["q025"] = r.q025;
    rj["q500"] = r.q500;
    rj["q975"] = r.q975;
    rj["eps_train_mean"] = r.eps_train_mean;
    rj["eps_max"] = r.eps_max;
    j["continuity"].push_back(std::move(rj));
  }
  j["cdfs"] = ordered_json::array();
  for (const auto& r : cdfs) {
    ordered_json rj;
    rj["n_traj"] = r.n_traj;
    rj["cap"] = cap_to_json(r.cap);
    rj["bounds"] = r.bounds;
    rj["fractions"] = r.fractions;
    j["cdfs"].push_back(std::move(rj));
  }
  return j;
}

AblationReport AblationReport::from_json(const json& j) {
  AblationReport report;
  report.version = j.at("version").get<std::string>();
  report.config_hash = j.at("config_hash").get<std::uint64_t>();
  report.config = AblationConfig::from_json(j.at("config"));
  report.note = j.at("note").get<std::string>();
  for (const auto& cj : j.at("cells")) {
    CellResult c;
    c.n_traj = cj.at("n_traj").get<int>();
    c.cap = cap_from_json(cj.at("cap"));
    c.quantile = cj.at("quantile").get<double>();
    c.trials_per_seed = cj.at("trials_per_seed").get<int>();
    c.bc_by_seed = json_to_ints(cj.at("bc_by_seed"));
    c.ccil_by_seed = json_to_ints(cj.at("ccil_by_seed"));
    c.bc_successes = cj.at("bc_successes").get<int>();
    c.ccil_successes = cj.at("ccil_successes").get<int>();
    c.z = cj.at("z").get<double>();
    c.p = cj.at("p").get<double>();
    c.stars = cj.at("stars").get<std::string>();
    c.accepted_fraction = cj.at("accepted_fraction").get<double>();
    report.cells.push_back(std::move(c));
  }
  for (const auto& rj : j.at("continuity")) {
    ContinuityRow r;
    r.n_traj = rj.at("n_traj").get<int>();
    r.cap = cap_from_json(rj.at("cap"));
    r.mean = rj.at("mean").get<double>();
    r.q025 = rj.at("q025").get<double>();
    r.q500 = rj.at("q500").get<double>();
    r.q975 = rj.at("q975").get<double>();
    r.eps_train_mean = rj.at("eps_train_mean").get<double>();
    r.eps_max = rj.at("eps_max").get<double>();
    report.continuity.push_back(r);
  }
  for (const auto& rj : j.at("cdfs")) {
    CdfRow r;
    r.n_traj = rj.at("n_traj").get<int>();
    r.cap = cap_from_json(rj.at("cap"));
    r.bounds = json_to_doubles(rj.at("bounds"));
    r.fractions = json_to_doubles(rj.at("fractions"));
    report.cdfs.push_back(std::move(r));
  }
  return report;
}

void emit_report(const AblationReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory: " + dir);

  {
    std::ofstream out(fs::path(dir) / "report.json");
    if (!out) throw IoError("cannot write report.json in " + dir);
    out << report.to_json().dump(2) << '\n';
    if (!out) throw IoError("failed writing report.json in " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "cells.csv");
    if (!out) throw IoError("cannot write cells.csv in " + dir);
    out << "n_traj,cap,quantile,trials,bc_successes,ccil_successes,bc_rate,"
           "ccil_rate,z,p,stars,accepted_fraction\n";
    for (const auto& c : report.cells) {
      const int n = c.pooled_trials();
      out << c.n_traj << ',' << cap_tag(c.cap) << ',' << fmt(c.quantile, "%g")
          << ',' << n << ',' << c.bc_successes << ',' << c.ccil_successes << ','
          << fmt(static_cast<double>(c.bc_successes) / n, "%.6g") << ','
          << fmt(static_cast<double>(c.ccil_successes) / n, "%.6g") << ','
          << fmt(c.z, "%.6g") << ',' << fmt(c.p, "%.6g") << ',' << c.stars
          << ',' << fmt(c.accepted_fraction, "%.6g") << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "lipschitz.csv");
    if (!out) throw IoError("cannot write lipschitz.csv in " + dir);
    out << "n_traj,cap,mean,q025,q500,q975,eps_train_mean,eps_max\n";
    for (const auto& r : report.continuity) {
      out << r.n_traj << ',' << cap_tag(r.cap) << ',' << fmt(r.mean, "%.9g")
          << ',' << fmt(r.q025, "%.9g") << ',' << fmt(r.q500, "%.9g") << ','
          << fmt(r.q975, "%.9g") << ',' << fmt(r.eps_train_mean, "%.9g") << ','
          << fmt(r.eps_max, "%.9g") << '\n';
    }
  }
  for (const auto& r : report.cdfs) {
    const std::string name =
        "label_cdf_n" + std::to_string(r.n_traj) + "_cap" + cap_tag(r.cap) + ".csv";
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw IoError("cannot write " + name + " in " + dir);
    out << "bound,cum_fraction\n";
    for (std::size_t i = 0; i < r.bounds.size(); ++i) {
      out << fmt(r.bounds[i], "%.9g") << ',' << fmt(r.fractions[i], "%.9g")
          << '\n';
    }
  }
}

AblationReport load_report(const std::string& report_json_path) {
  return AblationReport::from_json(load_json_file(report_json_path));
}

}  // namespace ccil
