#pragma once

#include "mfbo/common.hpp"

namespace mfbo {

// Digital (Sobol-type) low-discrepancy sequence in [0,1)^dim, dim <= 64.
//
// The first dimension is the van der Corput sequence; dimensions 2-5 use the
// classic direction-number initialization; higher dimensions derive their
// recurrence from computed primitive polynomials over GF(2) with a fixed,
// reproducible initialization. The all-zero first point is skipped, so every
// emitted coordinate is strictly positive.
class SobolSequence {
 public:
  explicit SobolSequence(int dim);

  Vector next();
  // n points stacked as rows.
  Matrix take(int n);

  int dim() const { return dim_; }

 private:
  int dim_;
  std::uint64_t index_ = 0;
  std::vector<std::uint32_t> state_;
  // direction_[d][b]: direction number for bit b of dimension d.
  std::vector<std::vector<std::uint32_t>> direction_;
};

// First n points of the dim-dimensional sequence (origin skipped).
Matrix sobol_grid(int n, int dim);

}  // namespace mfbo
