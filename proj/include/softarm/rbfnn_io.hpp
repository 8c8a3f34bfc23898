#pragma once

// JSON layout for saving and resuming a network:
//
//   {
//     "centers":  [[...N values...], ... P rows],
//     "width":    <double>,
//     "theta":    [[...n values...], ... P+1 rows, biases last],
//     "input_lo": [...N values...],
//     "input_hi": [...N values...],
//     "seed":     <unsigned integer>
//   }

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "softarm/rbfnn.hpp"

namespace softarm {

namespace detail {

inline nlohmann::json matrix_to_json(const MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const VectorXd& v) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j, const char* name) {
  require(j.is_array() && !j.empty(), std::string("network json: '") + name + "' must be a non-empty array");
  const auto rows = j.size();
  const auto cols = j[0].size();
  MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    require(j[r].is_array() && j[r].size() == cols, std::string("network json: ragged '") + name + "'");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline VectorXd vector_from_json(const nlohmann::json& j, const char* name) {
  require(j.is_array(), std::string("network json: '") + name + "' must be an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const RbfNetwork& net) {
  return {{"centers", detail::matrix_to_json(net.centers)},
          {"width", net.width},
          {"theta", detail::matrix_to_json(net.theta)},
          {"input_lo", detail::vector_to_json(net.input_lo)},
          {"input_hi", detail::vector_to_json(net.input_hi)},
          {"seed", net.seed}};
}

inline RbfNetwork network_from_json(const nlohmann::json& j) {
  RbfNetwork net;
  net.centers = detail::matrix_from_json(j.at("centers"), "centers");
  net.width = j.at("width").get<double>();
  net.theta = detail::matrix_from_json(j.at("theta"), "theta");
  net.input_lo = detail::vector_from_json(j.at("input_lo"), "input_lo");
  net.input_hi = detail::vector_from_json(j.at("input_hi"), "input_hi");
  net.seed = j.at("seed").get<std::uint64_t>();

  require(net.width > 0.0 && std::isfinite(net.width), "network json: width must be positive");
  require(net.theta.rows() == net.centers.rows() + 1, "network json: theta must have P+1 rows");
  require(net.input_lo.size() == net.centers.cols() && net.input_hi.size() == net.centers.cols(),
          "network json: bound length must equal the input dimension");
  require(net.theta.allFinite() && net.centers.allFinite(), "network json: non-finite values");
  return net;
}

inline void save_network(const RbfNetwork& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << to_json(net).dump(2) << '\n';
}

inline RbfNetwork load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return network_from_json(nlohmann::json::parse(f));
}

}  // namespace softarm
