#include "ccil/nn/serialize.hpp"

#include <fstream>

namespace ccil {

using nlohmann::json;

json vector_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vec vector_from_json(const json& j) {
  if (!j.is_array()) throw InputError("expected JSON array for vector");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw InputError("expected non-empty JSON array for matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw InputError("ragged JSON matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json to_json(const nn::Mlp& net) {
  json j;
  j["activation"] = nn::to_string(net.activation());
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json l;
    l["W"] = matrix_to_json(layer.W);
    l["b"] = vector_to_json(layer.b);
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  return j;
}

nn::Mlp mlp_from_json(const json& j) {
  if (!j.contains("activation") || !j.contains("layers")) {
    throw InputError("network JSON missing activation/layers");
  }
  const nn::Activation act =
      nn::activation_from_string(j["activation"].get<std::string>());
  std::vector<nn::Mlp::Layer> layers;
  for (const auto& l : j["layers"]) {
    layers.push_back({matrix_from_json(l["W"]), vector_from_json(l["b"])});
  }
  return nn::Mlp(std::move(layers), act);
}

json to_json(const Normalizer& n) {
  json j;
  j["mean"] = vector_to_json(n.mean);
  j["scale"] = vector_to_json(n.scale);
  return j;
}

Normalizer normalizer_from_json(const json& j) {
  Normalizer n;
  n.mean = vector_from_json(j.at("mean"));
  n.scale = vector_from_json(j.at("scale"));
  if (n.mean.size() != n.scale.size()) {
    throw InputError("normalizer JSON: mean/scale dimension mismatch");
  }
  return n;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
  return j;
}

void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing file: " + path);
}

}  // namespace ccil
