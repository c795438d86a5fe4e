#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cvxrelu/common.hpp"

namespace cvxrelu {

/// The activation pattern of a single ReLU-style neuron over the training
/// rows: mask[i] == 1 means example i is on the active side.
class ActivationPattern {
 public:
  explicit ActivationPattern(std::vector<std::uint8_t> mask) : mask_(std::move(mask)) {
    require(!mask_.empty(), "ActivationPattern: empty mask");
    for (auto b : mask_) require(b <= 1, "ActivationPattern: mask entries must be 0/1");
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(mask_.size()); }
  bool active(Eigen::Index i) const { return mask_[static_cast<std::size_t>(i)] != 0; }
  bool any_active() const {
    for (auto b : mask_)
      if (b) return true;
    return false;
  }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  /// Compact dedup key, e.g. "1101".
  std::string key() const {
    std::string s(mask_.size(), '0');
    for (std::size_t i = 0; i < mask_.size(); ++i)
      if (mask_[i]) s[i] = '1';
    return s;
  }

  /// 0/1 indicator as a dense column, the diagonal of D.
  Eigen::VectorXd indicator() const {
    Eigen::VectorXd v(size());
    for (Eigen::Index i = 0; i < size(); ++i) v[i] = mask_[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    return v;
  }

  /// Diagonal of 2D - I as a dense column of +-1.
  Eigen::VectorXd signs() const {
    Eigen::VectorXd v(size());
    for (Eigen::Index i = 0; i < size(); ++i) v[i] = mask_[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    return v;
  }

  bool operator==(const ActivationPattern& other) const { return mask_ == other.mask_; }

 private:
  std::vector<std::uint8_t> mask_;
};

inline ActivationPattern pattern_from_preactivation(const Eigen::VectorXd& z,
                                                    bool strict) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i)
    mask[static_cast<std::size_t>(i)] = strict ? (z[i] > 0.0) : (z[i] >= 0.0);
  return ActivationPattern(std::move(mask));
}

/// An ordered, duplicate-free collection of nonzero activation patterns for a
/// fixed dataset, with cached indicator and sign matrices for fast masked
/// linear algebra. Patterns optionally carry the gate vector that generated
/// them; gates are what let a fitted gated model predict on new data.
class PatternSet {
 public:
  PatternSet(Eigen::Index n, std::vector<ActivationPattern> patterns,
             std::vector<Eigen::VectorXd> gates = {})
      : n_(n), patterns_(std::move(patterns)), gates_(std::move(gates)) {
    require(n_ >= 1, "PatternSet: n must be >= 1");
    require(gates_.empty() || gates_.size() == patterns_.size(),
            "PatternSet: gate count does not match pattern count");
    std::unordered_set<std::string> seen;
    for (const auto& p : patterns_) {
      require(p.size() == n_, "PatternSet: pattern length differs from n");
      require(p.any_active(), "PatternSet: all-zero pattern is not allowed");
      require(seen.insert(p.key()).second, "PatternSet: duplicate pattern");
    }
    rebuild_cache();
  }

  /// Builds a set from candidate masks in order, dropping zero masks and
  /// duplicates (first occurrence wins, along with its gate if any).
  static PatternSet from_masks(Eigen::Index n, const std::vector<ActivationPattern>& masks,
                               const std::vector<Eigen::VectorXd>& gates = {}) {
    std::vector<ActivationPattern> kept;
    std::vector<Eigen::VectorXd> kept_gates;
    std::unordered_set<std::string> seen;
    const bool with_gates = !gates.empty();
    require(!with_gates || gates.size() == masks.size(),
            "PatternSet::from_masks: gate count does not match mask count");
    for (std::size_t i = 0; i < masks.size(); ++i) {
      if (!masks[i].any_active()) continue;
      if (!seen.insert(masks[i].key()).second) continue;
      kept.push_back(masks[i]);
      if (with_gates) kept_gates.push_back(gates[i]);
    }
    return PatternSet(n, std::move(kept), std::move(kept_gates));
  }

  Eigen::Index n() const { return n_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(patterns_.size()); }
  const ActivationPattern& pattern(Eigen::Index i) const {
    return patterns_[static_cast<std::size_t>(i)];
  }
  const std::vector<ActivationPattern>& patterns() const { return patterns_; }

  bool has_gates() const { return !gates_.empty() && gates_.size() == patterns_.size(); }
  const Eigen::VectorXd& gate(Eigen::Index i) const { return gates_[static_cast<std::size_t>(i)]; }
  const std::vector<Eigen::VectorXd>& gates() const { return gates_; }

  /// n x P matrix whose column i is the 0/1 diagonal of D_i.
  const Eigen::MatrixXd& indicators() const { return indicators_; }
  /// n x P matrix whose column i is the +-1 diagonal of 2 D_i - I.
  const Eigen::MatrixXd& signs() const { return signs_; }

  bool contains(const ActivationPattern& p) const {
    for (const auto& q : patterns_)
      if (q == p) return true;
    return false;
  }

 private:
  void rebuild_cache() {
    indicators_.resize(n_, size());
    signs_.resize(n_, size());
    for (Eigen::Index i = 0; i < size(); ++i) {
      indicators_.col(i) = patterns_[static_cast<std::size_t>(i)].indicator();
      signs_.col(i) = patterns_[static_cast<std::size_t>(i)].signs();
    }
  }

  Eigen::Index n_;
  std::vector<ActivationPattern> patterns_;
  std::vector<Eigen::VectorXd> gates_;
  Eigen::MatrixXd indicators_;
  Eigen::MatrixXd signs_;
};

/// Draws a gate vector for pattern sampling. The default (an empty function)
/// means standard Gaussian gates.
using GateSampler = std::function<Eigen::VectorXd(std::mt19937_64&)>;

/// Samples p gate vectors, records the pattern diag(1(X g >= 0)) of each,
/// and returns the deduplicated, zero-free collection. The generating gate of
/// each surviving pattern is retained. Deterministic for a fixed seed.
inline PatternSet sample_gate_patterns(const Eigen::MatrixXd& X, Eigen::Index p,
                                       std::uint64_t seed,
                                       const GateSampler& sampler = {}) {
  require(p >= 1, "sample_gate_patterns: need p >= 1");
  std::mt19937_64 rng(seed);
  std::vector<ActivationPattern> masks;
  std::vector<Eigen::VectorXd> gates;
  masks.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    Eigen::VectorXd g = sampler ? sampler(rng) : gaussian_vector(X.cols(), rng);
    require(g.size() == X.cols(), "sample_gate_patterns: gate dimension mismatch");
    masks.push_back(pattern_from_preactivation(X * g, /*strict=*/false));
    gates.push_back(std::move(g));
  }
  PatternSet out = PatternSet::from_masks(X.rows(), masks, gates);
  if (out.size() == 0)
    throw std::runtime_error(
        "sample_gate_patterns: every sampled pattern was zero; data looks degenerate");
  return out;
}

/// Harvests the active patterns diag(1(X W1_i > 0)) of an existing first
/// layer. Note the strict inequality: rows sitting exactly on a neuron's
/// hyperplane count as inactive here, unlike gate sampling.
inline PatternSet patterns_from_weights(const Eigen::MatrixXd& X,
                                        const Eigen::MatrixXd& W1) {
  require(W1.rows() == X.cols(), "patterns_from_weights: W1 must have d rows");
  std::vector<ActivationPattern> masks;
  std::vector<Eigen::VectorXd> gates;
  for (Eigen::Index i = 0; i < W1.cols(); ++i) {
    masks.push_back(pattern_from_preactivation(X * W1.col(i), /*strict=*/true));
    gates.push_back(W1.col(i));
  }
  std::vector<ActivationPattern> nonzero;
  std::vector<Eigen::VectorXd> nonzero_gates;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!masks[i].any_active()) continue;
    nonzero.push_back(masks[i]);
    nonzero_gates.push_back(gates[i]);
  }
  if (nonzero.empty()) return PatternSet(X.rows(), {}, {});
  return PatternSet::from_masks(X.rows(), nonzero, nonzero_gates);
}

/// Deduplicated union preserving a's ordering, then b's novel patterns.
/// Gate provenance survives when both inputs carry it (or one side is empty).
inline PatternSet union_patterns(const PatternSet& a, const PatternSet& b) {
  require(a.n() == b.n(), "union_patterns: pattern lengths differ");
  std::vector<ActivationPattern> masks;
  std::vector<Eigen::VectorXd> gates;
  const bool with_gates = (a.has_gates() || a.size() == 0) && (b.has_gates() || b.size() == 0);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    masks.push_back(a.pattern(i));
    if (with_gates) gates.push_back(a.gate(i));
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    masks.push_back(b.pattern(i));
    if (with_gates) gates.push_back(b.gate(i));
  }
  if (!with_gates) gates.clear();
  return PatternSet::from_masks(a.n(), masks, gates);
}

/// Computes (2D - I) X u for one pattern; u may have multiple columns.
inline Eigen::MatrixXd signed_matrix_apply(const ActivationPattern& pattern,
                                           const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& u) {
  require(pattern.size() == X.rows(), "signed_matrix_apply: pattern length != rows");
  require(u.rows() == X.cols(), "signed_matrix_apply: weight dimension mismatch");
  Eigen::MatrixXd z = X * u;
  const Eigen::VectorXd s = pattern.signs();
  for (Eigen::Index k = 0; k < z.cols(); ++k) z.col(k).array() *= s.array();
  return z;
}

/// Squared Euclidean norm of the negative part of (2D - I) X u; zero exactly
/// when u lies in the pattern's cone. Columns of a matrix u are summed.
inline double cone_gap(const ActivationPattern& pattern, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& u) {
  const Eigen::MatrixXd z = signed_matrix_apply(pattern, X, u);
  return z.array().min(0.0).matrix().squaredNorm();
}

}  // namespace cvxrelu
