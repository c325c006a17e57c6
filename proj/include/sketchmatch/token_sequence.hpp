#pragma once

#include <vector>

#include "sketchmatch/tensor.hpp"

namespace sketchmatch {

// Ordered visual tokens plus an optional retrieval token. Only alive tokens
// are materialized; `origin` maps each row of `tokens` back to its patch
// index and stays strictly increasing, so raster order survives selection.
// The retrieval token is never selected away.
struct TokenSequence {
  Tensor ret;                        // [1, d] when present
  Tensor tokens;                     // [alive, d]
  std::vector<std::size_t> origin;   // patch index per row, strictly increasing
  std::size_t full_count = 0;        // token count before any selection

  bool has_ret() const { return ret.defined(); }
  std::size_t alive_count() const { return origin.size(); }
  std::size_t width() const { return tokens.cols(); }

  std::vector<bool> alive_mask() const {
    std::vector<bool> mask(full_count, false);
    for (std::size_t o : origin) mask[o] = true;
    return mask;
  }

  void validate() const {
    require(tokens.defined() && tokens.ndim() == 2,
            "token sequence: tokens must be a 2-D matrix");
    require(tokens.rows() == origin.size(),
            "token sequence: origin size " + std::to_string(origin.size()) +
                " does not match token rows " + std::to_string(tokens.rows()));
    for (std::size_t i = 0; i < origin.size(); ++i) {
      require(origin[i] < full_count, "token sequence: origin out of range");
      require(i == 0 || origin[i] > origin[i - 1],
              "token sequence: origin must be strictly increasing");
    }
    if (has_ret())
      require(ret.ndim() == 2 && ret.rows() == 1 && ret.cols() == tokens.cols(),
              "token sequence: retrieval token shape " + shape_str(ret.shape()) +
                  " does not match tokens " + shape_str(tokens.shape()));
  }
};

}  // namespace sketchmatch
