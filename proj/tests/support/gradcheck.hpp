#pragma once

// Central finite-difference oracle for gradients. Lives in test code only and
// never touches the tape-based backward path it is checking: losses are
// re-evaluated forward-only with perturbed leaf values.

#include <cmath>
#include <functional>
#include <vector>

#include "sketchmatch/tensor.hpp"

namespace smtest {

using sketchmatch::Tape;
using sketchmatch::Tensor;

// Max relative error between tape gradients and central finite differences
// over every element of every leaf. `build_loss` must reconstruct the graph
// from the leaves' current values on each call.
inline double grad_max_rel_error(std::vector<Tensor> leaves,
                                 const std::function<Tensor()>& build_loss,
                                 double step = 1e-5) {
  for (Tensor& t : leaves) t.zero_grad();
  {
    Tape tape;
    Tensor loss = build_loss();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (Tensor& t : leaves) {
    std::vector<double> g(t.size(), 0.0);
    if (t.has_grad())
      for (std::size_t i = 0; i < t.size(); ++i) g[i] = static_cast<double>(t.grad()[i]);
    analytic.push_back(std::move(g));
  }

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& t = leaves[li];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = static_cast<double>(t.raw_value()[i]);
      t.raw_value()[i] = static_cast<sketchmatch::real>(orig + step);
      const double fp = static_cast<double>(build_loss().item());
      t.raw_value()[i] = static_cast<sketchmatch::real>(orig - step);
      const double fm = static_cast<double>(build_loss().item());
      t.raw_value()[i] = static_cast<sketchmatch::real>(orig);
      const double fd = (fp - fm) / (2.0 * step);
      const double a = analytic[li][i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(fd)});
      worst = std::max(worst, std::fabs(a - fd) / denom);
    }
  }
  return worst;
}

}  // namespace smtest
