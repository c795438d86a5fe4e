#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cvxrelu/dataset.hpp"

namespace cvxrelu {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline std::optional<double> parse_double(const std::string& token) {
  if (token.empty()) return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Loads a rectangular numeric CSV table (optional header, comma separated)
/// and splits off the target column. `target_column` may be a column name
/// (header required), a 0-based index, or empty for the last column.
///
/// Targets: with one_hot, distinct labels become one-hot columns in sorted
/// order (numeric when all labels parse as numbers, lexicographic
/// otherwise). Without one_hot, exactly two distinct labels map to {-1, +1}
/// in that sorted order; anything else must be numeric and is kept as a
/// single regression column. Malformed input fails with a line-numbered
/// diagnostic.
inline Dataset load_csv(const std::string& path, const std::string& target_column = "",
                        bool one_hot = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw std::runtime_error("load_csv: " + path + " is empty");

  const std::size_t width = rows[0].size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != width)
      throw std::runtime_error("load_csv: " + path + ":" + std::to_string(line_numbers[r]) +
                               ": ragged row (expected " + std::to_string(width) +
                               " fields, got " + std::to_string(rows[r].size()) + ")");
  if (width < 2)
    throw std::runtime_error("load_csv: need at least one feature column and one target column");

  const bool has_header = std::any_of(rows[0].begin(), rows[0].end(), [](const std::string& t) {
    return !detail::parse_double(t).has_value();
  });
  std::vector<std::string> header;
  if (has_header) {
    header = rows[0];
    rows.erase(rows.begin());
    line_numbers.erase(line_numbers.begin());
    if (rows.empty()) throw std::runtime_error("load_csv: " + path + " has a header but no data rows");
  }

  std::size_t target_idx = width - 1;
  if (!target_column.empty()) {
    const auto by_name = std::find(header.begin(), header.end(), target_column);
    if (by_name != header.end()) {
      target_idx = static_cast<std::size_t>(by_name - header.begin());
    } else {
      const auto as_index = detail::parse_double(target_column);
      if (!as_index || *as_index != static_cast<double>(static_cast<long>(*as_index)) ||
          *as_index < 0 || static_cast<std::size_t>(*as_index) >= width)
        throw std::runtime_error("load_csv: target column '" + target_column +
                                 "' is neither a known header name nor a valid index");
      target_idx = static_cast<std::size_t>(*as_index);
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(width - 1);
  Eigen::MatrixXd features(n, d);
  std::vector<std::string> labels(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index fcol = 0;
    for (std::size_t col = 0; col < width; ++col) {
      const std::string& token = rows[static_cast<std::size_t>(r)][col];
      if (col == target_idx) {
        labels[static_cast<std::size_t>(r)] = token;
        continue;
      }
      const auto value = detail::parse_double(token);
      if (!value)
        throw std::runtime_error("load_csv: " + path + ":" +
                                 std::to_string(line_numbers[static_cast<std::size_t>(r)]) +
                                 ": non-numeric value '" + token + "' in feature column " +
                                 std::to_string(col));
      features(r, fcol++) = *value;
    }
  }

  // Distinct labels in a deterministic order: numeric when possible.
  std::vector<std::string> distinct;
  for (const auto& label : labels)
    if (std::find(distinct.begin(), distinct.end(), label) == distinct.end())
      distinct.push_back(label);
  const bool all_numeric = std::all_of(distinct.begin(), distinct.end(), [](const std::string& s) {
    return detail::parse_double(s).has_value();
  });
  std::sort(distinct.begin(), distinct.end(), [&](const std::string& a, const std::string& b) {
    if (all_numeric) return *detail::parse_double(a) < *detail::parse_double(b);
    return a < b;
  });
  auto class_of = [&](const std::string& label) {
    return static_cast<Eigen::Index>(
        std::find(distinct.begin(), distinct.end(), label) - distinct.begin());
  };

  Eigen::MatrixXd targets;
  if (one_hot) {
    targets = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(distinct.size()));
    for (Eigen::Index r = 0; r < n; ++r) targets(r, class_of(labels[static_cast<std::size_t>(r)])) = 1.0;
  } else if (distinct.size() == 2) {
    targets.resize(n, 1);
    for (Eigen::Index r = 0; r < n; ++r)
      targets(r, 0) = class_of(labels[static_cast<std::size_t>(r)]) == 0 ? -1.0 : 1.0;
  } else {
    targets.resize(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto value = detail::parse_double(labels[static_cast<std::size_t>(r)]);
      if (!value)
        throw std::runtime_error("load_csv: " + path + ":" +
                                 std::to_string(line_numbers[static_cast<std::size_t>(r)]) +
                                 ": non-numeric target '" + labels[static_cast<std::size_t>(r)] +
                                 "' (use --one-hot for categorical targets)");
      targets(r, 0) = *value;
    }
  }

  std::vector<std::string> names;
  if (has_header) {
    for (std::size_t col = 0; col < width; ++col)
      if (col != target_idx) names.push_back(header[col]);
  }
  return Dataset(std::move(features), std::move(targets), std::move(names));
}

/// Writes a dataset as a plain CSV with a header; multi-column targets are
/// collapsed to a class index column named y.
inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out.precision(17);
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    if (data.feature_names.empty())
      out << "x" << j << ",";
    else
      out << data.feature_names[static_cast<std::size_t>(j)] << ",";
  }
  out << "y\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << data.features(i, j) << ",";
    if (data.classes() == 1) {
      out << data.targets(i, 0) << "\n";
    } else {
      Eigen::Index cls = 0;
      data.targets.row(i).maxCoeff(&cls);
      out << cls << "\n";
    }
  }
}

}  // namespace cvxrelu
