#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lorvp/errors.hpp"
#include "lorvp/nn/params.hpp"

namespace lorvp {

struct SgdOptions {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Classical momentum SGD:
///   v <- momentum * v + g + weight_decay * theta
///   theta <- theta - lr * v
/// Velocity buffers exist only for parameters that are not frozen.
template <Real T>
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {
    if (!(options.lr >= 0.0)) throw ConfigError("sgd: lr must be non-negative");
    if (!(options.momentum >= 0.0 && options.momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0,1)");
    if (!(options.weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be non-negative");
  }

  const SgdOptions& options() const noexcept { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

  /// Applies one update to every non-frozen parameter and consumes its
  /// gradient. A non-frozen parameter without a gradient is a contract error.
  void step(ParamStore<T>& params) {
    for (const auto& e : params.entries()) {
      if (!e.frozen && !e.value.has_grad()) {
        throw ContractError("sgd: no gradient for trainable parameter '" + e.name + "'");
      }
    }
    const T lr = static_cast<T>(options_.lr);
    const T mu = static_cast<T>(options_.momentum);
    const T wd = static_cast<T>(options_.weight_decay);
    for (const auto& entry : params.entries()) {
      if (entry.frozen) continue;
      Tensor<T> param = entry.value;
      auto& v = velocity_[entry.name];
      if (v.size() != param.numel()) v.assign(param.numel(), T(0));
      auto theta = param.mutable_data();
      const auto g = param.grad();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        v[i] = mu * v[i] + g[i] + wd * theta[i];
        theta[i] -= lr * v[i];
      }
      param.clear_grad();
    }
  }

  bool has_state(const std::string& name) const { return velocity_.count(name) != 0; }
  const std::vector<T>& velocity(const std::string& name) const { return velocity_.at(name); }

 private:
  SgdOptions options_;
  std::map<std::string, std::vector<T>> velocity_;
};

/// Half-cosine decay from base_lr at epoch 0 to 0 at `epochs`.
inline double cosine_lr(double base_lr, std::size_t epoch, std::size_t epochs) {
  if (epochs == 0) return base_lr;
  return 0.5 * base_lr * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

}  // namespace lorvp
