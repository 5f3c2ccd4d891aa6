#ifndef CCIL_STATS_HPP_
#define CCIL_STATS_HPP_

#include <cstddef>
#include <vector>

namespace ccil::stats {

double mean(const std::vector<double>& xs);
double stddev(const std::vector<double>& xs);  // sample (n-1); 0 for n < 2

// Linear-interpolation quantile on a copy of xs; q in [0, 1].
// quantile({1,2,3,4}, 0.5) == 2.5.
double quantile(std::vector<double> xs, double q);

struct Histogram {
  std::vector<double> edges;   // size bins + 1
  std::vector<int> counts;     // size bins
};

Histogram histogram(const std::vector<double>& xs, int bins);

// Standard normal CDF via erfc.
double normal_cdf(double x);

}  // namespace ccil::stats

#endif  // CCIL_STATS_HPP_
