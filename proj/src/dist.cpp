#include "caref/dist.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "caref/detail/kernels.hpp"

namespace caref {

std::string ProbViolation::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::NonFinite:
      os << "non-finite entry at (" << row << ", " << col << ")";
      break;
    case Kind::BelowFloor:
      os << "entry " << value << " at (" << row << ", " << col
         << ") below the probability floor by " << defect;
      break;
    case Kind::AboveOne:
      os << "entry " << value << " at (" << row << ", " << col << ") exceeds 1 by "
         << defect;
      break;
    case Kind::RowSum:
      os << "row " << row << " sums to " << value << " (off by " << defect << ")";
      break;
  }
  return os.str();
}

void require_finite(const LogitSeq& logits) {
  for (int t = 0; t < logits.rows(); ++t) {
    for (int v = 0; v < logits.cols(); ++v) {
      if (!std::isfinite(logits(t, v))) {
        std::ostringstream os;
        os << "non-finite logit at (" << t << ", " << v << ")";
        throw std::invalid_argument(os.str());
      }
    }
  }
}

static void require_shape(const Matrix& m, const char* what) {
  if (m.rows() < 1 || m.cols() < 2) {
    throw std::invalid_argument(std::string(what) +
                                ": need at least one step and a vocabulary of 2");
  }
}

ProbSeq softmax(const LogitSeq& logits, double floor) {
  require_shape(logits, "softmax");
  require_finite(logits);
  ProbSeq out(logits.rows(), logits.cols());
  std::vector<double> row;
  for (int t = 0; t < logits.rows(); ++t) {
    detail::softmax_row<double>(logits.row(t), floor, row);
    std::copy(row.begin(), row.end(), out.row(t).begin());
  }
  return out;
}

Matrix log_softmax(const LogitSeq& logits) {
  require_shape(logits, "log_softmax");
  require_finite(logits);
  Matrix out(logits.rows(), logits.cols());
  for (int t = 0; t < logits.rows(); ++t) {
    const double lse = detail::log_sum_exp<double>(logits.row(t));
    for (int v = 0; v < logits.cols(); ++v) out(t, v) = logits(t, v) - lse;
  }
  return out;
}

double entropy(std::span<const double> row) {
  if (row.size() < 2) throw std::invalid_argument("entropy: need at least 2 entries");
  double h = 0.0;
  for (double p : row) {
    if (p > 0.0) h -= p * std::log(p);
  }
  // Last-ulp excursions past the closed form are clipped, not propagated.
  return std::clamp(h, 0.0, std::log(static_cast<double>(row.size())));
}

std::optional<ProbViolation> validate(const ProbSeq& p, double floor) {
  require_shape(p, "validate");
  for (int t = 0; t < p.rows(); ++t) {
    double sum = 0.0;
    for (int v = 0; v < p.cols(); ++v) {
      const double x = p(t, v);
      if (!std::isfinite(x)) {
        return ProbViolation{ProbViolation::Kind::NonFinite, t, v, x, 0.0};
      }
      if (x < floor) {
        return ProbViolation{ProbViolation::Kind::BelowFloor, t, v, x, floor - x};
      }
      if (x > 1.0) {
        return ProbViolation{ProbViolation::Kind::AboveOne, t, v, x, x - 1.0};
      }
      sum += x;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      return ProbViolation{ProbViolation::Kind::RowSum, t, -1, sum, sum - 1.0};
    }
  }
  return std::nullopt;
}

}  // namespace caref
