#ifndef CCIL_NN_SERIALIZE_HPP_
#define CCIL_NN_SERIALIZE_HPP_

#include <nlohmann/json.hpp>

#include "ccil/dataset.hpp"
#include "ccil/nn/mlp.hpp"

namespace ccil {

// JSON (de)serialization for networks and normalizers. Doubles survive a
// round trip bit-exactly (nlohmann emits shortest-representation decimals
// that parse back to the same value).
nlohmann::json to_json(const nn::Mlp& net);
nn::Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Mat& m);  // row-major nested arrays
Mat matrix_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vec& v);
Vec vector_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace ccil

#endif  // CCIL_NN_SERIALIZE_HPP_
