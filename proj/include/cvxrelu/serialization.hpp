#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cvxrelu/dataset.hpp"
#include "cvxrelu/network.hpp"

namespace cvxrelu {

/// A trained model as written to disk: either network flavor plus the column
/// scaler of the training run. Weights are stored in the raw (unnormalized)
/// feature space so the model predicts directly on raw data.
struct SerializedModel {
  NetworkKind kind = NetworkKind::GReLU;
  GReLUNetwork grelu;
  ReLUNetwork relu;
  ColumnScaler scaler;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_hint = 0) {
  if (!j.is_array()) throw std::runtime_error("model json: expected an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, cols_hint);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error("model json: ragged matrix rows");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json model_to_json(const SerializedModel& model) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = model.kind == NetworkKind::GReLU ? "grelu" : "relu";
  if (model.kind == NetworkKind::GReLU) {
    j["gates"] = detail::matrix_to_json(model.grelu.gates);
    j["W1"] = detail::matrix_to_json(model.grelu.W1);
    j["w2"] = detail::matrix_to_json(model.grelu.W2);
  } else {
    if (model.relu.gates.size() > 0) j["gates"] = detail::matrix_to_json(model.relu.gates);
    j["W1"] = detail::matrix_to_json(model.relu.W1);
    j["w2"] = detail::matrix_to_json(model.relu.W2);
  }
  nlohmann::json scaler;
  nlohmann::json norms = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.scaler.norms.size(); ++i)
    norms.push_back(model.scaler.norms[i]);
  scaler["column_norms"] = std::move(norms);
  scaler["applied"] = model.scaler.applied;
  j["scaler"] = std::move(scaler);
  return j;
}

inline SerializedModel model_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
    throw std::runtime_error("model json: unsupported or missing format_version");
  SerializedModel model;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "grelu")
    model.kind = NetworkKind::GReLU;
  else if (kind == "relu")
    model.kind = NetworkKind::ReLU;
  else
    throw std::runtime_error("model json: unknown kind '" + kind + "'");

  const Eigen::MatrixXd w1 = detail::matrix_from_json(j.at("W1"));
  const Eigen::MatrixXd w2 = detail::matrix_from_json(j.at("w2"));
  if (model.kind == NetworkKind::GReLU) {
    model.grelu.W1 = w1;
    model.grelu.W2 = w2;
    model.grelu.gates = detail::matrix_from_json(j.at("gates"));
  } else {
    model.relu.W1 = w1;
    model.relu.W2 = w2;
    if (j.contains("gates")) model.relu.gates = detail::matrix_from_json(j.at("gates"));
  }
  const auto& scaler = j.at("scaler");
  const auto& norms = scaler.at("column_norms");
  model.scaler.norms.resize(static_cast<Eigen::Index>(norms.size()));
  for (Eigen::Index i = 0; i < model.scaler.norms.size(); ++i)
    model.scaler.norms[i] = norms.at(static_cast<std::size_t>(i)).get<double>();
  model.scaler.applied = scaler.at("applied").get<bool>();
  return model;
}

inline void save_model(const SerializedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << model_to_json(model).dump(2) << "\n";
}

inline SerializedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace cvxrelu
