#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Dense inner loops shared by candidate selection and the ED model. Each
// kernel has a serial reference and an OpenMP version; the OpenMP versions
// split work so that every output element is reduced in the same order as
// the serial code, which keeps results bitwise identical across thread
// counts.
namespace relink::kernels {

using FloatRows = std::span<const std::span<const float>>;

namespace serial {

// out[c] += sum_r rows[r][c]
void accumulate_rows(FloatRows rows, std::span<double> out);
// out[r] = <rows[r], v>
void dot_rows(FloatRows rows, std::span<const double> v, std::span<double> out);
// out[i*n + j] = sum_c a[i][c] * w[c] * b[j][c] * scale, row-major n x m.
void bilinear_diag(std::span<const double> a, std::size_t n, std::span<const double> b, std::size_t m, std::span<const double> w,
                   double scale, std::span<double> out);

}  // namespace serial

namespace parallel {

void accumulate_rows(FloatRows rows, std::span<double> out);
void dot_rows(FloatRows rows, std::span<const double> v, std::span<double> out);
void bilinear_diag(std::span<const double> a, std::size_t n, std::span<const double> b, std::size_t m, std::span<const double> w,
                   double scale, std::span<double> out);

}  // namespace parallel

// Below this many multiply-adds the parallel kernels run inline.
inline constexpr std::size_t kParallelThreshold = 1 << 16;

}  // namespace relink::kernels
