#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lorvp/errors.hpp"
#include "lorvp/tensor/tensor.hpp"
#include "lorvp/util/checksum.hpp"

namespace lorvp {

/// Ordered, uniquely named parameter tensors. A frozen parameter has
/// requires_grad off, so the tape never produces a gradient for it and the
/// optimizer skips it.
template <Real T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool frozen = false;
  };

  /// Registers `value` (aliased, not copied) under `name`.
  Tensor<T>& add(std::string name, Tensor<T> value, bool frozen = false) {
    if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
    value.set_requires_grad(!frozen);
    entries_.push_back(Entry{std::move(name), std::move(value), frozen});
    return entries_.back().value;
  }

  bool contains(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return true;
    }
    return false;
  }

  const Tensor<T>& at(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return e.value;
    }
    throw ContractError("unknown parameter '" + std::string(name) + "'");
  }

  Tensor<T>& at(std::string_view name) {
    return const_cast<Tensor<T>&>(static_cast<const ParamStore&>(*this).at(name));
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void set_frozen(std::string_view name, bool frozen) {
    for (auto& e : entries_) {
      if (e.name == name) {
        e.frozen = frozen;
        e.value.set_requires_grad(!frozen);
        if (frozen) e.value.clear_grad();
        return;
      }
    }
    throw ContractError("unknown parameter '" + std::string(name) + "'");
  }

  void freeze_all() {
    for (auto& e : entries_) set_frozen(e.name, true);
  }

  bool all_frozen() const {
    for (const auto& e : entries_) {
      if (!e.frozen) return false;
    }
    return true;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  void clear_grads() {
    for (auto& e : entries_) e.value.clear_grad();
  }

  /// FNV-1a over names and raw values, in registration order.
  std::uint64_t checksum() const {
    Checksum c;
    for (const auto& e : entries_) {
      c.update(e.name);
      c.update(e.value.data());
    }
    return c.value();
  }

  /// Deep copy converted to another precision; frozen flags carry over.
  template <Real U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.frozen);
    return out;
  }

  ParamStore clone() const { return cast<T>(); }

 private:
  std::vector<Entry> entries_;
};

}  // namespace lorvp
