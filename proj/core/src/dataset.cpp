#include "ccil/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace ccil {

using nlohmann::json;

Normalizer Normalizer::identity(int dim) {
  Normalizer n;
  n.mean = Vec::Zero(dim);
  n.scale = Vec::Ones(dim);
  return n;
}

Normalizer Normalizer::fit(const Mat& columns) {
  if (columns.cols() == 0) throw InputError("Normalizer::fit: no samples");
  Normalizer n;
  n.mean = columns.rowwise().mean();
  Mat centered = columns.colwise() - n.mean;
  Vec var = centered.cwiseProduct(centered).rowwise().mean();
  n.scale = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < n.scale.size(); ++i) {
    if (!(n.scale[i] > 1e-12)) n.scale[i] = 1.0;
  }
  return n;
}

Vec Normalizer::normalize(const Vec& x) const {
  return (x - mean).cwiseQuotient(scale);
}

Vec Normalizer::denormalize(const Vec& x) const {
  return x.cwiseProduct(scale) + mean;
}

Mat Normalizer::normalize(const Mat& columns) const {
  return (columns.colwise() - mean).array().colwise() / scale.array();
}

Mat Normalizer::denormalize(const Mat& columns) const {
  return (columns.array().colwise() * scale.array()).colwise() + mean.array();
}

TrajectoryDataset::TrajectoryDataset(std::vector<Trajectory> trajectories)
    : trajectories_(std::move(trajectories)) {
  validate();
}

void TrajectoryDataset::validate() {
  for (std::size_t ti = 0; ti < trajectories_.size(); ++ti) {
    const auto& traj = trajectories_[ti];
    if (traj.empty()) {
      throw InputError("dataset: trajectory " + std::to_string(ti) + " is empty");
    }
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const auto& tr = traj[t];
      if (!tr.s.allFinite() || !tr.a.allFinite() || !tr.s_next.allFinite()) {
        throw InputError("dataset: non-finite values in trajectory " +
                         std::to_string(ti) + " step " + std::to_string(t));
      }
      if (tr.s.size() != tr.s_next.size()) {
        throw InputError("dataset: s / s_next dimension mismatch");
      }
      if (t > 0 && traj[t - 1].s_next != tr.s) {
        throw InputError("dataset: chaining violated in trajectory " +
                         std::to_string(ti) + " at step " + std::to_string(t) +
                         " (s_next of previous step != s)");
      }
    }
  }
  if (!trajectories_.empty()) {
    const auto& first = trajectories_.front().front();
    state_dim_ = static_cast<int>(first.s.size());
    action_dim_ = static_cast<int>(first.a.size());
    for (const auto& traj : trajectories_) {
      for (const auto& tr : traj) {
        if (tr.s.size() != state_dim_ || tr.a.size() != action_dim_) {
          throw InputError("dataset: inconsistent dimensions across transitions");
        }
      }
    }
  }
}

std::size_t TrajectoryDataset::n_transitions() const {
  std::size_t n = 0;
  for (const auto& t : trajectories_) n += t.size();
  return n;
}

std::vector<const Transition*> TrajectoryDataset::flatten() const {
  std::vector<const Transition*> out;
  out.reserve(n_transitions());
  for (const auto& traj : trajectories_) {
    for (const auto& tr : traj) out.push_back(&tr);
  }
  return out;
}

Mat TrajectoryDataset::states() const {
  Mat m(state_dim_, static_cast<Eigen::Index>(n_transitions()));
  Eigen::Index k = 0;
  for (const auto& traj : trajectories_) {
    for (const auto& tr : traj) m.col(k++) = tr.s;
  }
  return m;
}

Mat TrajectoryDataset::actions() const {
  Mat m(action_dim_, static_cast<Eigen::Index>(n_transitions()));
  Eigen::Index k = 0;
  for (const auto& traj : trajectories_) {
    for (const auto& tr : traj) m.col(k++) = tr.a;
  }
  return m;
}

Mat TrajectoryDataset::inputs() const {
  Mat m(state_dim_ + action_dim_, static_cast<Eigen::Index>(n_transitions()));
  Eigen::Index k = 0;
  for (const auto& traj : trajectories_) {
    for (const auto& tr : traj) {
      m.col(k).head(state_dim_) = tr.s;
      m.col(k).tail(action_dim_) = tr.a;
      ++k;
    }
  }
  return m;
}

Mat TrajectoryDataset::residuals() const {
  Mat m(state_dim_, static_cast<Eigen::Index>(n_transitions()));
  Eigen::Index k = 0;
  for (const auto& traj : trajectories_) {
    for (const auto& tr : traj) m.col(k++) = tr.s_next - tr.s;
  }
  return m;
}

namespace {

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

}  // namespace

TrajectoryDataset TrajectoryDataset::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);
  // traj id -> (t -> transition); records may arrive in any order.
  std::map<int, std::map<int, Transition>> by_traj;
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
    if (!j.contains("traj") || !j.contains("t") || !j.contains("s") ||
        !j.contains("a") || !j.contains("s_next")) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": record missing one of traj/t/s/a/s_next");
    }
    Transition tr{vec_from_json(j["s"]), vec_from_json(j["a"]),
                  vec_from_json(j["s_next"])};
    by_traj[j["traj"].get<int>()][j["t"].get<int>()] = std::move(tr);
  }
  std::vector<Trajectory> trajs;
  trajs.reserve(by_traj.size());
  for (auto& [id, steps] : by_traj) {
    Trajectory traj;
    int expect = 0;
    for (auto& [t, tr] : steps) {
      if (t != expect++) {
        throw InputError(path + ": trajectory " + std::to_string(id) +
                         " has non-contiguous step indices");
      }
      traj.push_back(std::move(tr));
    }
    trajs.push_back(std::move(traj));
  }
  return TrajectoryDataset(std::move(trajs));
}

void TrajectoryDataset::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  for (std::size_t ti = 0; ti < trajectories_.size(); ++ti) {
    const auto& traj = trajectories_[ti];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      json j;
      j["traj"] = static_cast<int>(ti);
      j["t"] = static_cast<int>(t);
      j["s"] = vec_to_json(traj[t].s);
      j["a"] = vec_to_json(traj[t].a);
      j["s_next"] = vec_to_json(traj[t].s_next);
      out << j.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing trajectory file: " + path);
}

}  // namespace ccil
