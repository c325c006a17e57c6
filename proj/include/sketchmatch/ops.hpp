#pragma once

#include <vector>

#include "sketchmatch/rng.hpp"
#include "sketchmatch/tensor.hpp"

// Forward primitives. Each records its backward rule on the active tape when
// any input requires grad. Shape contracts are documented per primitive and
// violations throw sketchmatch::Error naming the primitive and both shapes.
namespace sketchmatch::ops {

// Elementwise, both operands of identical shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Multiply by a compile-time constant (not a recorded tensor).
Tensor scale(const Tensor& a, real c);

// a: [m, k], b: [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

// a: [m, n] -> [n, m]
Tensor transpose(const Tensor& a);

// x: [m, k], w: [k, n], b: [n] broadcast over rows -> [m, n]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// x: [c_in, h, w], weight: [c_out, c_in, kh, kw], bias: [c_out],
// zero padding `pad` on all sides, square stride -> [c_out, oh, ow] with
// oh = (h + 2*pad - kh) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// x: [m, n], softmax over each row independently.
Tensor softmax_rows(const Tensor& x);

// x: [m, n], gain/bias: [n]; each row normalized to zero mean / unit variance
// (biased variance, epsilon inside the square root), then scaled and shifted.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       real eps = real(1e-6));

// Inverted-scaling dropout; identity when !training or rate == 0.
// rate must lie in [0, 1).
Tensor dropout(const Tensor& x, real rate, Rng& rng, bool training);

// (1/n) * sum(x_i^2) -> scalar
Tensor mean_square(const Tensor& x);

// sqrt(sum(x_i^2)) -> scalar; gradient defined as 0 at the origin.
Tensor euclidean_norm(const Tensor& x);

// (1/n) * sum(x_i) -> scalar
Tensor mean_all(const Tensor& x);

// Same element count, new extents; data copied in row-major order.
Tensor reshape(const Tensor& x, Shape shape);

// x: [m, n], gathers the given rows (duplicates allowed) -> [k, n]
Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows);

// x: [m, n] -> [m, count] starting at column `start`.
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);

// All parts share the column count / row count respectively.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// k scalars -> [k]
Tensor stack_scalars(const std::vector<Tensor>& parts);

// x: [m, n], every row scaled to unit L2 norm; zero rows pass through as
// zeros (gradient zero there as well).
Tensor rows_l2_normalize(const Tensor& x);

// values: [kr, kc] placed into a zero [n_rows, n_cols] matrix at the given
// row/col positions (both index lists strictly increasing).
Tensor scatter_matrix(const Tensor& values, const std::vector<std::size_t>& row_pos,
                      const std::vector<std::size_t>& col_pos, std::size_t n_rows,
                      std::size_t n_cols);

}  // namespace sketchmatch::ops
