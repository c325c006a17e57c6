#include "sketchmatch/optimizer.hpp"

#include <cmath>

namespace sketchmatch {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg)
    : cfg_(cfg) {
  slots_.reserve(params.size());
  for (auto& [name, p] : params) {
    require(p.defined() && p.requires_grad(),
            "adamw: parameter '" + name + "' does not require grad");
    Slot s;
    s.name = name;
    s.param = p;
    s.m.assign(p.size(), real(0));
    s.v.assign(p.size(), real(0));
    slots_.push_back(std::move(s));
  }
}

void AdamW::step(real lr) {
  ++t_;
  const real bc1 = real(1) - std::pow(cfg_.beta1, static_cast<real>(t_));
  const real bc2 = real(1) - std::pow(cfg_.beta2, static_cast<real>(t_));
  for (Slot& s : slots_) {
    require(s.param.has_grad(), "adamw: missing gradient for parameter '" + s.name + "'");
    const auto& g = s.param.grad();
    auto& p = s.param.raw_value();
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (real(1) - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (real(1) - cfg_.beta2) * g[i] * g[i];
      const real mhat = s.m[i] / bc1;
      const real vhat = s.v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

}  // namespace sketchmatch
