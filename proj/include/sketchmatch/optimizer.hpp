#pragma once

#include <string>
#include <vector>

#include "sketchmatch/tensor.hpp"

namespace sketchmatch {

struct AdamWConfig {
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
  real weight_decay = real(0.01);
};

// AdamW with decoupled weight decay and bias-corrected moment estimates.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

  // Applies one update from the gradients currently populated on the
  // parameters. A parameter without a gradient is rejected by name.
  void step(real lr);

  void zero_grad();

  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<real> m, v;
  };
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace sketchmatch
