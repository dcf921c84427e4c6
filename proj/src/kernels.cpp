#include "relink/kernels.hpp"

#include <algorithm>
#include <cstddef>

namespace relink::kernels {
namespace serial {

void accumulate_rows(FloatRows rows, std::span<double> out) {
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
  }
}

void dot_rows(FloatRows rows, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) s += rows[r][c] * v[c];
    out[r] = s;
  }
}

void bilinear_diag(std::span<const double> a, std::size_t n, std::span<const double> b, std::size_t m, std::span<const double> w,
                   double scale, std::span<double> out) {
  const std::size_t d = w.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += a[i * d + c] * w[c] * b[j * d + c];
      out[i * m + j] = s * scale;
    }
  }
}

}  // namespace serial

namespace parallel {

void accumulate_rows(FloatRows rows, std::span<double> out) {
  // Column blocks keep the row walk cache friendly; each element still sums
  // rows in order.
  constexpr std::size_t kBlock = 32;
  const auto blocks = static_cast<std::ptrdiff_t>((out.size() + kBlock - 1) / kBlock);
  const bool big = rows.size() * out.size() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t hi = std::min(out.size(), lo + kBlock);
    for (const auto& row : rows) {
      for (std::size_t c = lo; c < hi; ++c) out[c] += row[c];
    }
  }
}

void dot_rows(FloatRows rows, std::span<const double> v, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
  const bool big = rows.size() * v.size() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    double s = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) s += row[c] * v[c];
    out[static_cast<std::size_t>(r)] = s;
  }
}

void bilinear_diag(std::span<const double> a, std::size_t n, std::span<const double> b, std::size_t m, std::span<const double> w,
                   double scale, std::span<double> out) {
  const std::size_t d = w.size();
  const bool big = n * m * d >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += a[i * d + c] * w[c] * b[j * d + c];
      out[i * m + j] = s * scale;
    }
  }
}

}  // namespace parallel
}  // namespace relink::kernels
