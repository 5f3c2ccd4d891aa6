#include "ccil/labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ccil/nn/serialize.hpp"

namespace ccil {

using nlohmann::json;

void FilterConfig::validate() const {
  if (quantile.has_value() == absolute_sigma.has_value()) {
    throw ConfigError("filter config: exactly one of quantile / sigma required");
  }
  if (quantile && (*quantile < 0.0 || *quantile > 1.0)) {
    throw InputError("filter config: quantile must lie in [0, 1]");
  }
  if (absolute_sigma && !(*absolute_sigma > 0.0)) {
    throw InputError("filter config: sigma must be positive");
  }
  if (bound_offset < 0.0) {
    throw InputError("filter config: bound offset must be nonnegative");
  }
}

FilterConfig FilterConfig::by_quantile(double q) {
  FilterConfig cfg;
  cfg.quantile = q;
  return cfg;
}

FilterConfig FilterConfig::by_sigma(double sigma) {
  FilterConfig cfg;
  cfg.absolute_sigma = sigma;
  return cfg;
}

std::vector<CorrectiveLabel> gen_labels(const DynamicsModel& model,
                                        const TrajectoryDataset& data) {
  if (data.state_dim() != model.state_dim() ||
      data.action_dim() != model.action_dim()) {
    throw InputError("gen_labels: dataset dimensions do not match model");
  }
  std::vector<CorrectiveLabel> labels;
  labels.reserve(data.n_transitions());
  const auto& trajs = data.trajectories();
  for (std::size_t ti = 0; ti < trajs.size(); ++ti) {
    for (std::size_t t = 0; t < trajs[ti].size(); ++t) {
      const Transition& tr = trajs[ti][t];
      const Vec residual = model.predict(tr.s, tr.a);
      CorrectiveLabel lab;
      lab.s_g = tr.s - residual;
      lab.a_g = tr.a;
      lab.s_star = tr.s;
      lab.traj = static_cast<int>(ti);
      lab.step = static_cast<int>(t);
      lab.distance = residual.norm();
      lab.local_l = local_lipschitz(model, tr.s, tr.a);
      lab.bound = lab.local_l * lab.distance;
      lab.finite = lab.s_g.allFinite() && std::isfinite(lab.bound);
      labels.push_back(std::move(lab));
    }
  }
  return labels;
}

FilterResult filter_labels(std::vector<CorrectiveLabel> labels,
                           const FilterConfig& cfg) {
  cfg.validate();
  if (labels.empty()) throw InputError("filter_labels: no labels");

  FilterResult result;
  std::vector<CorrectiveLabel> finite;
  finite.reserve(labels.size());
  for (auto& lab : labels) {
    if (lab.finite) {
      finite.push_back(std::move(lab));
    } else {
      lab.accepted = false;
      result.rejected.push_back(std::move(lab));
    }
  }
  result.n_considered = finite.size();

  double sigma;
  if (cfg.absolute_sigma) {
    sigma = *cfg.absolute_sigma;
  } else {
    // Deterministic tie handling: order by (bound, traj, step), set sigma to
    // the bound at the ceil(q*n)-th position and accept strictly below it.
    // q=0 puts sigma at the smallest bound (nothing is strictly below);
    // q=1 walks past the end (sigma = +inf, everything accepted).
    if (finite.empty()) throw InputError("filter_labels: no finite labels");
    std::vector<std::size_t> order(finite.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      const auto& a = finite[i];
      const auto& b = finite[j];
      if (a.bound != b.bound) return a.bound < b.bound;
      if (a.traj != b.traj) return a.traj < b.traj;
      return a.step < b.step;
    });
    const auto n = static_cast<double>(finite.size());
    auto m = static_cast<std::size_t>(
        std::max(0.0, std::ceil(*cfg.quantile * n - 1e-9)));
    m = std::min(m, finite.size());
    sigma = (m < finite.size())
                ? finite[order[m]].bound + cfg.bound_offset
                : std::numeric_limits<double>::infinity();
  }

  result.sigma = sigma;
  for (auto& lab : finite) {
    lab.accepted = (lab.bound + cfg.bound_offset) < sigma;
    (lab.accepted ? result.accepted : result.rejected).push_back(std::move(lab));
  }
  return result;
}

double LabelCdf::quantile(double q) const {
  return stats::quantile(sorted_bounds, q);
}

LabelCdf label_error_cdf(const std::vector<CorrectiveLabel>& labels) {
  if (labels.empty()) throw InputError("label_error_cdf: no labels");
  LabelCdf cdf;
  cdf.sorted_bounds.reserve(labels.size());
  for (const auto& lab : labels) {
    if (lab.finite) cdf.sorted_bounds.push_back(lab.bound);
  }
  if (cdf.sorted_bounds.empty()) {
    throw InputError("label_error_cdf: no finite labels");
  }
  std::sort(cdf.sorted_bounds.begin(), cdf.sorted_bounds.end());
  const auto n = static_cast<double>(cdf.sorted_bounds.size());
  cdf.cum_fraction.reserve(cdf.sorted_bounds.size());
  for (std::size_t i = 0; i < cdf.sorted_bounds.size(); ++i) {
    cdf.cum_fraction.push_back(static_cast<double>(i + 1) / n);
  }
  return cdf;
}

void save_labels_jsonl(const std::string& path,
                       const std::vector<CorrectiveLabel>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write label file: " + path);
  for (const auto& lab : labels) {
    json j;
    j["s"] = vector_to_json(lab.s_g);
    j["a"] = vector_to_json(lab.a_g);
    j["s_next"] = vector_to_json(lab.s_star);
    j["distance"] = lab.distance;
    j["bound"] = lab.bound;
    j["accepted"] = lab.accepted;
    j["source"] = {lab.traj, lab.step};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing label file: " + path);
}

std::vector<CorrectiveLabel> load_labels_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file: " + path);
  std::vector<CorrectiveLabel> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": invalid JSON record: " + e.what());
    }
    CorrectiveLabel lab;
    lab.s_g = vector_from_json(j.at("s"));
    lab.a_g = vector_from_json(j.at("a"));
    lab.s_star = vector_from_json(j.at("s_next"));
    lab.distance = j.at("distance").get<double>();
    lab.bound = j.at("bound").get<double>();
    lab.accepted = j.at("accepted").get<bool>();
    lab.traj = j.at("source")[0].get<int>();
    lab.step = j.at("source")[1].get<int>();
    lab.local_l = (lab.distance > 0.0) ? lab.bound / lab.distance : 0.0;
    lab.finite = lab.s_g.allFinite() && std::isfinite(lab.bound);
    labels.push_back(std::move(lab));
  }
  if (labels.empty()) throw InputError(path + ": no label records");
  return labels;
}

}  // namespace ccil
