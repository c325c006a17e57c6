#pragma once

// One gradient-check sweep over every forward primitive, driven by a seed.
// Shared between the unit tests (a few seeds) and acceptance criterion 1
// (100 seeds). ReLU inputs are kept away from the kink so the central
// difference is valid.

#include <vector>

#include "gradcheck.hpp"
#include "sketchmatch/ops.hpp"
#include "sketchmatch/rng.hpp"

namespace smtest {

using sketchmatch::Rng;
using sketchmatch::Shape;
using sketchmatch::Tensor;
namespace ops = sketchmatch::ops;

inline Tensor random_tensor(Rng& rng, Shape shape, bool away_from_zero = false) {
  std::vector<sketchmatch::real> data(sketchmatch::shape_numel(shape));
  for (auto& v : data) {
    double x = rng.uniform(-2.0, 2.0);
    if (away_from_zero) {
      while (std::fabs(x) < 0.1) x = rng.uniform(-2.0, 2.0);
    }
    v = static_cast<sketchmatch::real>(x);
  }
  return Tensor::from(std::move(shape), std::move(data), /*requires_grad=*/true);
}

// Worst relative error across the whole battery for this seed.
inline double primitive_battery_worst_error(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  auto track = [&](double e) { worst = std::max(worst, e); };

  {
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
    track(grad_max_rel_error({a, b}, [&] { return ops::mean_all(ops::add(a, b)); }));
    track(grad_max_rel_error({a, b}, [&] { return ops::mean_all(ops::sub(a, b)); }));
    track(grad_max_rel_error({a, b}, [&] { return ops::mean_all(ops::mul(a, b)); }));
    track(grad_max_rel_error({a}, [&] { return ops::mean_all(ops::scale(a, 1.7)); }));
  }
  {
    Tensor a = random_tensor(rng, {3, 5}), b = random_tensor(rng, {5, 4});
    track(grad_max_rel_error(
        {a, b}, [&] { return ops::mean_square(ops::matmul(a, b)); }));
    track(grad_max_rel_error({a}, [&] { return ops::mean_square(ops::transpose(a)); }));
  }
  {
    Tensor x = random_tensor(rng, {4, 5}), w = random_tensor(rng, {5, 3});
    Tensor b = random_tensor(rng, {3});
    track(grad_max_rel_error(
        {x, w, b}, [&] { return ops::mean_square(ops::affine(x, w, b)); }));
  }
  {
    Tensor x = random_tensor(rng, {2, 6, 7});
    Tensor w = random_tensor(rng, {3, 2, 3, 3});
    Tensor b = random_tensor(rng, {3});
    track(grad_max_rel_error({x, w, b}, [&] {
      return ops::mean_square(ops::conv2d(x, w, b, 2, 1));
    }));
    track(grad_max_rel_error({x, w, b}, [&] {
      return ops::mean_square(ops::conv2d(x, w, b, 1, 0));
    }));
  }
  {
    Tensor x = random_tensor(rng, {3, 6}, /*away_from_zero=*/true);
    track(grad_max_rel_error({x}, [&] { return ops::mean_all(ops::relu(x)); }));
    track(grad_max_rel_error({x}, [&] { return ops::mean_all(ops::sigmoid(x)); }));
    track(grad_max_rel_error({x}, [&] { return ops::mean_square(ops::softmax_rows(x)); }));
    track(grad_max_rel_error({x}, [&] { return ops::mean_square(x); }));
    track(grad_max_rel_error({x}, [&] { return ops::euclidean_norm(x); }));
    track(grad_max_rel_error({x}, [&] { return ops::mean_all(x); }));
    track(grad_max_rel_error(
        {x}, [&] { return ops::mean_square(ops::rows_l2_normalize(x)); }));
  }
  {
    Tensor x = random_tensor(rng, {4, 6});
    Tensor g = random_tensor(rng, {6}), b = random_tensor(rng, {6});
    track(grad_max_rel_error(
        {x, g, b}, [&] { return ops::mean_square(ops::layer_norm_rows(x, g, b)); }));
  }
  {
    Tensor x = random_tensor(rng, {3, 8});
    const std::uint64_t mask_seed = rng.next_u64();
    track(grad_max_rel_error({x}, [&] {
      Rng drop_rng(mask_seed);  // same mask on every re-evaluation
      return ops::mean_all(ops::dropout(x, 0.4, drop_rng, /*training=*/true));
    }));
  }
  {
    Tensor x = random_tensor(rng, {4, 6});
    track(grad_max_rel_error(
        {x}, [&] { return ops::mean_square(ops::reshape(x, {2, 12})); }));
    track(grad_max_rel_error({x}, [&] {
      return ops::mean_square(ops::take_rows(x, {3, 0, 3}));
    }));
    track(grad_max_rel_error(
        {x}, [&] { return ops::mean_square(ops::slice_cols(x, 1, 3)); }));
  }
  {
    Tensor a = random_tensor(rng, {2, 5}), b = random_tensor(rng, {3, 5});
    track(grad_max_rel_error(
        {a, b}, [&] { return ops::mean_square(ops::concat_rows({a, b})); }));
    Tensor c = random_tensor(rng, {2, 3});
    track(grad_max_rel_error(
        {a, c}, [&] { return ops::mean_square(ops::concat_cols({a, c})); }));
  }
  {
    Tensor s1 = random_tensor(rng, {1}), s2 = random_tensor(rng, {1});
    track(grad_max_rel_error({s1, s2}, [&] {
      return ops::mean_square(ops::stack_scalars({s1, s2, ops::mul(s1, s2)}));
    }));
  }
  {
    Tensor v = random_tensor(rng, {2, 3});
    track(grad_max_rel_error({v}, [&] {
      return ops::mean_square(ops::scatter_matrix(v, {0, 3}, {1, 2, 4}, 4, 5));
    }));
  }
  return worst;
}

}  // namespace smtest
