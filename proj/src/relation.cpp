#include "sketchmatch/relation.hpp"

#include <cmath>
#include <fstream>

#include "sketchmatch/ops.hpp"

namespace sketchmatch {

void KernelMatrix::validate() const {
  require(values.defined() && values.ndim() == 2 && values.rows() == n &&
              values.cols() == n,
          "kernel: values must be [n, n]");
  require(row_alive.size() == n && col_alive.size() == n,
          "kernel: alive masks must have length n");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const real v = values.at(i, j);
      if (row_alive[i] && col_alive[j]) {
        require(v >= real(-1) - real(1e-9) && v <= real(1) + real(1e-9),
                "kernel: entry outside [-1, 1]");
      } else {
        require(v == real(0), "kernel: masked entry must be exactly zero");
      }
    }
}

void write_kernel_text(const KernelMatrix& m, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "kernel: cannot open '" + path + "' for writing");
  os << "# sketchmatch-kernel v1\n" << m.n << " " << m.n << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) {
      if (j) os << " ";
      os << static_cast<double>(m.values.at(i, j));
    }
    os << "\n";
  }
  require(os.good(), "kernel: write failed for '" + path + "'");
}

RelationNet::RelationNet(const ModelConfig& cfg, ParamStore& params, Rng& init_rng)
    : cfg_(cfg) {
  const std::size_t n = cfg_.n_tokens();
  const std::size_t in = n * n;
  const std::size_t hidden = cfg_.relation_hidden_size();
  fc1_w_ = params.create_normal("relation.fc1.weight", {in, hidden}, init_rng,
                                static_cast<real>(std::sqrt(2.0 / static_cast<double>(in))));
  fc1_b_ = params.create_zeros("relation.fc1.bias", {hidden});
  fc2_w_ = params.create_normal("relation.fc2.weight", {hidden, 1}, init_rng,
                                static_cast<real>(std::sqrt(2.0 / static_cast<double>(hidden))));
  fc2_b_ = params.create_zeros("relation.fc2.bias", {1});
  if (!cfg_.use_cosine_kernel) {
    dist_w_ = params.create_normal("relation.distance.weight", {2 * cfg_.embed_dim, 1},
                                   init_rng, real(0.02));
    dist_b_ = params.create_zeros("relation.distance.bias", {1});
  }
}

KernelMatrix RelationNet::cosine_kernel(const TokenSequence& sketch,
                                        const TokenSequence& photo) const {
  require(sketch.width() == photo.width(),
          "cosine_kernel: token widths differ, " + std::to_string(sketch.width()) +
              " vs " + std::to_string(photo.width()));
  require(sketch.full_count == photo.full_count,
          "cosine_kernel: sequences disagree on the full token count");
  const std::size_t n = sketch.full_count;
  // Unit rows turn the product into cosines; zero-norm tokens stay zero rows
  // and land as zero entries rather than a division fault.
  Tensor s = ops::rows_l2_normalize(sketch.tokens);
  Tensor p = ops::rows_l2_normalize(photo.tokens);
  Tensor compact = ops::matmul(s, ops::transpose(p));
  KernelMatrix m;
  m.n = n;
  m.values = ops::scatter_matrix(compact, sketch.origin, photo.origin, n, n);
  m.row_alive = sketch.alive_mask();
  m.col_alive = photo.alive_mask();
  return m;
}

KernelMatrix RelationNet::learned_distance_matrix(const TokenSequence& sketch,
                                                  const TokenSequence& photo) const {
  require(!cfg_.use_cosine_kernel,
          "relation: learned distance is only available when the cosine kernel is off");
  const std::size_t d = cfg_.embed_dim;
  const std::size_t ks = sketch.alive_count(), kp = photo.alive_count();
  // u . [x_i ; y_j] + b decomposes into a row term plus a column term.
  Tensor u_s = ops::take_rows(dist_w_, [&] {
    std::vector<std::size_t> idx(d);
    for (std::size_t i = 0; i < d; ++i) idx[i] = i;
    return idx;
  }());
  Tensor u_p = ops::take_rows(dist_w_, [&] {
    std::vector<std::size_t> idx(d);
    for (std::size_t i = 0; i < d; ++i) idx[i] = d + i;
    return idx;
  }());
  Tensor a = ops::matmul(sketch.tokens, u_s);  // [ks, 1]
  Tensor c = ops::matmul(photo.tokens, u_p);   // [kp, 1]
  Tensor ones_row = Tensor::full({1, kp}, real(1));
  Tensor ones_col = Tensor::full({ks, 1}, real(1));
  Tensor grid = ops::add(ops::matmul(a, ones_row), ops::matmul(ones_col, ops::transpose(c)));
  Tensor bias_grid = ops::matmul(ones_col, ops::matmul(ops::reshape(dist_b_, {1, 1}), ones_row));
  grid = ops::add(grid, bias_grid);
  KernelMatrix m;
  m.n = sketch.full_count;
  m.values = ops::scatter_matrix(grid, sketch.origin, photo.origin, m.n, m.n);
  m.row_alive = sketch.alive_mask();
  m.col_alive = photo.alive_mask();
  return m;
}

Tensor RelationNet::score_values(const Tensor& values, bool training, Rng* rng) const {
  require(values.defined() && values.ndim() == 2,
          "relation_score: kernel values must be a matrix");
  const std::size_t in = values.size();
  require(in == fc1_w_.rows(),
          "relation_score: kernel layout " + shape_str(values.shape()) +
              " does not match the trained input width " +
              std::to_string(fc1_w_.rows()));
  Tensor x = ops::reshape(values, {1, in});
  Tensor h = ops::relu(ops::affine(x, fc1_w_, fc1_b_));
  if (training) {
    require(rng != nullptr, "relation_score: training mode needs an rng for dropout");
    h = ops::dropout(h, static_cast<real>(cfg_.dropout_rate), *rng, true);
  }
  Tensor y = ops::affine(h, fc2_w_, fc2_b_);
  return ops::reshape(ops::sigmoid(y), {1});
}

Tensor RelationNet::relation_score(const KernelMatrix& m, bool training, Rng* rng) const {
  return score_values(m.values, training, rng);
}

}  // namespace sketchmatch
