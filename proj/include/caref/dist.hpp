#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "caref/matrix.hpp"

namespace caref {

/// Minimum probability kept after softmax flooring. One global constant so
/// every divergence term and every gradient sees the same admissible set.
inline constexpr double kProbFloor = 1e-12;

/// Slack accepted on row sums by probability validation.
inline constexpr double kRowSumTol = 1e-9;

/// Vocabulary descriptor. Sizes below 2 make every divergence here trivial,
/// so they are rejected outright.
class Vocab {
 public:
  explicit Vocab(int size) : size_(size) {
    if (size < 2) throw std::invalid_argument("Vocab: size must be at least 2");
  }
  int size() const { return size_; }
  bool operator==(const Vocab&) const = default;

 private:
  int size_;
};

/// Uniform reference distribution over a vocabulary. 1/|V| is computed once
/// and its log derives from the stored value, so all consumers agree bitwise.
class UniformPrior {
 public:
  explicit UniformPrior(Vocab v)
      : vocab_(v), value_(1.0 / v.size()), log_value_(std::log(value_)) {}
  Vocab vocab() const { return vocab_; }
  double value() const { return value_; }
  double log_value() const { return log_value_; }

 private:
  Vocab vocab_;
  double value_;
  double log_value_;
};

/// Unconstrained pre-softmax scores, steps x vocab.
using LogitSeq = Matrix;
/// Per-step probability rows, steps x vocab.
using ProbSeq = Matrix;
/// A single probability row (valid rows sum to 1; exact zeros are allowed
/// for inputs that never passed through the softmax floor, e.g. sparsemax).
using ProbRow = std::vector<double>;

struct ProbViolation {
  enum class Kind { NonFinite, BelowFloor, AboveOne, RowSum };
  Kind kind;
  int row = -1;
  int col = -1;      // -1 for row-sum violations
  double value = 0;  // offending entry or row sum
  double defect = 0; // distance from the admissible set
  std::string describe() const;
};

/// Throws std::invalid_argument naming the first non-finite entry.
void require_finite(const LogitSeq& logits);

/// Row-wise max-shifted softmax. Entries below `floor` are raised to it and
/// the row renormalized; rows that never hit the floor pass through the
/// plain normalization untouched.
ProbSeq softmax(const LogitSeq& logits, double floor = kProbFloor);

/// Row-wise log-probabilities via shifted log-sum-exp. Not floored: extreme
/// margins keep their true magnitude (e.g. [1000, 0] -> [~0, -1000]).
Matrix log_softmax(const LogitSeq& logits);

/// Shannon entropy of one row in nats, with 0*ln(0) taken as 0. The result
/// is clamped into [0, ln |V|] to absorb last-ulp excursions.
double entropy(std::span<const double> row);

/// Checks every entry against [floor, 1] and every row sum against 1 within
/// kRowSumTol. Returns the first violation in row-major order, or nullopt.
std::optional<ProbViolation> validate(const ProbSeq& p, double floor = kProbFloor);

}  // namespace caref
