#pragma once

#include "lorvp/data/cifar10.hpp"
#include "lorvp/data/synthetic.hpp"
#include "lorvp/harness/config.hpp"

namespace lorvp {

struct TaskData {
  Dataset train;
  Dataset test;
};

namespace harness_detail {

inline Dataset head_of(Dataset ds, std::size_t n) {
  if (n == 0 || n >= ds.size()) return ds;
  ds.labels.resize(n);
  ds.pixels.resize(n * ds.image_size());
  return ds;
}

inline SyntheticSpec synthetic_spec(const DatasetConfig& d, std::size_t n, const std::string& split) {
  SyntheticSpec s;
  s.kind = d.generator;
  s.num_samples = n;
  s.num_classes = d.num_classes;
  s.separation = d.separation;
  s.seed = d.seed;
  s.split = split;
  return s;
}

inline TaskData load_task(const DatasetConfig& d, bool target) {
  if (d.kind == "cifar10") {
    auto [train, test] = cifar10::load(d.dir);
    return {head_of(std::move(train), d.limit_train), head_of(std::move(test), d.limit_test)};
  }
  auto train = synthetic_spec(d, d.train_samples, "train");
  auto test = synthetic_spec(d, d.test_samples, "test");
  if (target) {
    train = target_of(train, d.hue_shift_deg);
    test = target_of(test, d.hue_shift_deg);
  }
  return {gen_synthetic(train), gen_synthetic(test)};
}

}  // namespace harness_detail

/// Pretraining data: the generator as configured (or CIFAR-10).
inline TaskData load_source(const DatasetConfig& d) { return harness_detail::load_task(d, false); }

/// Adaptation data: the hue-shifted, class-remapped counterpart (or CIFAR-10).
inline TaskData load_target(const DatasetConfig& d) { return harness_detail::load_task(d, true); }

}  // namespace lorvp
