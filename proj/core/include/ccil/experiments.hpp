#ifndef CCIL_EXPERIMENTS_HPP_
#define CCIL_EXPERIMENTS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccil/envs.hpp"
#include "ccil/labels.hpp"
#include "ccil/policy.hpp"

namespace ccil {

// Full description of an ablation run: the cell grid (data sizes x Lipschitz
// caps x rejection quantiles), evaluation protocol, and every training knob.
// A report is a pure function of this struct, so the struct also defines the
// provenance hash.
struct AblationConfig {
  std::string env = "wallgrasp";
  std::vector<int> sizes = {5, 100};
  std::vector<double> quantiles = {0.2, 0.5, 0.8};
  std::vector<double> caps = {std::numeric_limits<double>::infinity()};
  int trials = 48;  // evaluation rollouts per seed and arm
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::uint64_t master_seed = 0;
  double noise_scale = 0.02;
  double generated_weight = 1.0;

  std::vector<int> dyn_hidden = {64};
  int dyn_epochs = 400;
  int dyn_batch = 64;
  double dyn_lr = 1e-3;

  std::vector<int> policy_hidden = {64, 64};
  int policy_epochs = 400;
  int policy_batch = 64;
  double policy_lr = 1e-3;

  void validate() const;

  nlohmann::ordered_json to_json() const;
  static AblationConfig from_json(const nlohmann::json& j);
  static AblationConfig load(const std::string& path);

  std::uint64_t hash() const;
};

struct ZTest {
  double z = 0.0;
  double p = 1.0;
};

// Pooled two-proportion z-test for successes_a/n vs successes_b/n, two-sided
// p-value. Degenerate pooled variance (both arms all-success or all-failure)
// yields z = 0, p = 1.
ZTest z_test(int successes_a, int successes_b, int n);

// "****" p<0.001, "***" p<0.01, "**" p<0.05, "*" p<0.1, else "ns".
std::string significance_stars(double p);

struct CellResult {
  int n_traj = 0;
  double cap = 0.0;
  double quantile = 0.0;
  std::vector<int> bc_by_seed;
  std::vector<int> ccil_by_seed;
  int trials_per_seed = 0;
  int bc_successes = 0;    // pooled over seeds
  int ccil_successes = 0;  // pooled over seeds
  double z = 0.0;
  double p = 1.0;
  std::string stars = "ns";
  double accepted_fraction = 0.0;  // mean over seeds

  int pooled_trials() const {
    return trials_per_seed * static_cast<int>(bc_by_seed.size());
  }
};

// Per (size, cap): distribution of local Lipschitz coefficients over the
// demonstrations (pooled across seeds) and the dynamics-model residual errors.
struct ContinuityRow {
  int n_traj = 0;
  double cap = 0.0;
  double mean = 0.0;
  double q025 = 0.0;
  double q500 = 0.0;
  double q975 = 0.0;
  double eps_train_mean = 0.0;
  double eps_max = 0.0;
};

// Per (size, cap): label error-bound CDF pooled across seeds, downsampled to
// a fixed quantile table so reports stay compact and byte-stable.
struct CdfRow {
  int n_traj = 0;
  double cap = 0.0;
  std::vector<double> bounds;     // quantile values, non-decreasing
  std::vector<double> fractions;  // matching cumulative fractions
};

struct AblationReport {
  std::string version;
  std::uint64_t config_hash = 0;
  AblationConfig config;
  std::vector<CellResult> cells;  // sizes x caps x quantiles, in config order
  std::vector<ContinuityRow> continuity;  // sizes x caps
  std::vector<CdfRow> cdfs;               // sizes x caps
  std::string note;

  nlohmann::ordered_json to_json() const;
  static AblationReport from_json(const nlohmann::json& j);
};

// One grid cell, all seeds: collect -> train dynamics -> generate and filter
// labels -> train paired policies (with and without the generated labels,
// same sub-seed) -> evaluate both arms on common evaluation seeds.
struct CellCounts {
  std::vector<int> bc_by_seed;
  std::vector<int> ccil_by_seed;
  int trials_per_seed = 0;
  double accepted_fraction = 0.0;

  int bc_total() const;
  int ccil_total() const;
};

CellCounts run_cell(const AblationConfig& cfg, int n_traj, double cap,
                    double quantile);

// The full grid. Stages are cached so arms and cells that share work (the
// demonstration set per (size, seed), the dynamics model per (size, cap,
// seed), the BC arm per (size, seed)) reuse it; `jobs` parallelizes
// independent units without changing any result.
AblationReport run_ablation(const AblationConfig& cfg, int jobs = 1);

// Writes report.json plus plot-ready CSVs (cells.csv, lipschitz.csv, and one
// label_cdf_*.csv per size x cap) into dir, creating it if needed.
void emit_report(const AblationReport& report, const std::string& dir);

AblationReport load_report(const std::string& report_json_path);

}  // namespace ccil

#endif  // CCIL_EXPERIMENTS_HPP_
