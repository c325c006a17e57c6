#include "sketchmatch/params.hpp"

namespace sketchmatch {

Tensor ParamStore::create(const std::string& name, Shape shape,
                          const std::function<real()>& init) {
  require(!has(name), "params: duplicate parameter '" + name + "'");
  std::vector<real> data(shape_numel(shape));
  for (real& v : data) v = init();
  Tensor t = Tensor::from(std::move(shape), std::move(data), /*requires_grad=*/true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape) {
  return create(name, std::move(shape), [] { return real(0); });
}

Tensor ParamStore::create_full(const std::string& name, Shape shape, real fill) {
  return create(name, std::move(shape), [fill] { return fill; });
}

Tensor ParamStore::create_normal(const std::string& name, Shape shape, Rng& rng,
                                 real stddev) {
  return create(name, std::move(shape),
                [&rng, stddev] { return static_cast<real>(rng.normal(0.0, stddev)); });
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), "params: unknown parameter '" + name + "'");
  return items_[it->second].second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

}  // namespace sketchmatch
