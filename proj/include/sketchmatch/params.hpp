#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sketchmatch/rng.hpp"
#include "sketchmatch/tensor.hpp"

namespace sketchmatch {

// Ordered registry of named trainable tensors. Insertion order is the
// canonical order for checkpoints and optimizer state, so identical
// construction sequences give identical layouts.
class ParamStore {
 public:
  // Creates a parameter filled by `init` (called once per element, in
  // row-major order). Re-creating an existing name is an error.
  Tensor create(const std::string& name, Shape shape,
                const std::function<real()>& init);
  Tensor create_zeros(const std::string& name, Shape shape);
  Tensor create_full(const std::string& name, Shape shape, real fill);
  Tensor create_normal(const std::string& name, Shape shape, Rng& rng, real stddev);

  bool has(const std::string& name) const;
  Tensor get(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t total_elements() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace sketchmatch
