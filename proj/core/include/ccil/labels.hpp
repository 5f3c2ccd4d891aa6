#ifndef CCIL_LABELS_HPP_
#define CCIL_LABELS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "ccil/dynamics.hpp"

namespace ccil {

// A corrective label walks one model-predicted step backwards from an expert
// state: executing a_g from s_g should land on the expert state s*. The label
// therefore trains the policy on states just off the demonstration manifold.
struct CorrectiveLabel {
  Vec s_g;          // s* - f(s*, a*)
  Vec a_g;          // the expert action, verbatim
  Vec s_star;       // the source expert state (the label's target next state)
  int traj = 0;     // source transition
  int step = 0;
  double distance = 0.0;  // ||s_g - s*|| == ||f(s*, a*)||
  double local_l = 0.0;   // spectral norm of the state Jacobian at the source
  double bound = 0.0;     // local_l * distance, the computable error bound
  bool accepted = false;
  bool finite = true;     // s_g free of NaN/Inf
};

// Exactly one of quantile / absolute_sigma is active. bound_offset is added
// to every bound before thresholding (conservative mode passes eps_max here;
// it cannot change which labels a quantile keeps, only the reported sigma and
// absolute-mode decisions).
struct FilterConfig {
  std::optional<double> quantile;
  std::optional<double> absolute_sigma;
  double bound_offset = 0.0;

  void validate() const;

  static FilterConfig by_quantile(double q);
  static FilterConfig by_sigma(double sigma);
};

struct FilterResult {
  std::vector<CorrectiveLabel> accepted;
  std::vector<CorrectiveLabel> rejected;  // includes non-finite labels
  double sigma = 0.0;                     // threshold actually applied
  std::size_t n_considered = 0;           // finite labels entering the filter
};

// One label per expert transition, in flattened (trajectory, step) order;
// `accepted` left false.
std::vector<CorrectiveLabel> gen_labels(const DynamicsModel& model,
                                        const TrajectoryDataset& data);

// Quantile mode: sigma is the q-quantile of the (offset) bound distribution
// and a label is kept iff bound < sigma, so q = 0 keeps nothing and q = 1
// keeps everything. Ties at sigma are rejected; order is stabilized by
// (bound, trajectory, step) so results are deterministic. Labels with
// non-finite s_g are rejected before the quantile is taken.
FilterResult filter_labels(std::vector<CorrectiveLabel> labels,
                           const FilterConfig& cfg);

// Empirical CDF of label error bounds, for report emission.
struct LabelCdf {
  std::vector<double> sorted_bounds;  // ascending
  std::vector<double> cum_fraction;   // (i+1)/n per entry

  double quantile(double q) const;
};

LabelCdf label_error_cdf(const std::vector<CorrectiveLabel>& labels);

// Line-delimited JSON: the trajectory record shape (s = s_g, a = a_g,
// s_next = s*) plus {"distance", "bound", "accepted", "source": [traj, t]}.
void save_labels_jsonl(const std::string& path,
                       const std::vector<CorrectiveLabel>& labels);
std::vector<CorrectiveLabel> load_labels_jsonl(const std::string& path);

}  // namespace ccil

#endif  // CCIL_LABELS_HPP_
