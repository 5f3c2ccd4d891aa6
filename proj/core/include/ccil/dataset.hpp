#ifndef CCIL_DATASET_HPP_
#define CCIL_DATASET_HPP_

#include <string>
#include <vector>

#include "ccil/common.hpp"

namespace ccil {

// One expert triplet; the atomic unit of demonstration data.
struct Transition {
  Vec s;
  Vec a;
  Vec s_next;
};

using Trajectory = std::vector<Transition>;

// Per-dimension affine standardization (zero mean, unit scale). Dimensions
// with zero variance keep scale 1 so the map stays bijective.
struct Normalizer {
  Vec mean;
  Vec scale;

  static Normalizer identity(int dim);
  static Normalizer fit(const Mat& columns);

  int dim() const { return static_cast<int>(mean.size()); }
  Vec normalize(const Vec& x) const;
  Vec denormalize(const Vec& x) const;
  Mat normalize(const Mat& columns) const;
  Mat denormalize(const Mat& columns) const;
};

class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;
  explicit TrajectoryDataset(std::vector<Trajectory> trajectories);

  static TrajectoryDataset load_jsonl(const std::string& path);
  void save_jsonl(const std::string& path) const;

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  std::size_t n_transitions() const;
  bool empty() const { return trajectories_.empty(); }

  // All transitions flattened, in (trajectory, step) order.
  std::vector<const Transition*> flatten() const;

  // Column-per-sample matrices over all transitions.
  Mat states() const;        // state_dim x N
  Mat actions() const;       // action_dim x N
  Mat inputs() const;        // (state_dim + action_dim) x N, rows [s; a]
  Mat residuals() const;     // state_dim x N, s_next - s

 private:
  void validate();

  std::vector<Trajectory> trajectories_;
  int state_dim_ = 0;
  int action_dim_ = 0;
};

}  // namespace ccil

#endif  // CCIL_DATASET_HPP_
