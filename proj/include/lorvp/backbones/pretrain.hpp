#pragma once

#include <cstdint>

#include "lorvp/backbones/backbone.hpp"
#include "lorvp/data/batches.hpp"
#include "lorvp/data/normalize.hpp"
#include "lorvp/nn/loss.hpp"
#include "lorvp/nn/sgd.hpp"
#include "lorvp/util/metrics.hpp"

namespace lorvp {

struct PretrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool flip = false;
};

/// Supervised training of every backbone parameter on the source task.
/// History rows are per-epoch running train loss/accuracy. The caller
/// freezes the model afterwards.
inline History pretrain(Backbone<float>& model, const NormalizedDataset& source, const PretrainConfig& config) {
  if (model.frozen()) throw ContractError("pretrain: backbone is frozen");
  for (int y : source.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_source_classes()) {
      throw DataError("pretrain: label " + std::to_string(y) + " outside the " +
                      std::to_string(model.num_source_classes()) + " source classes");
    }
  }
  Sgd<float> opt({config.lr, config.momentum, config.weight_decay});
  History history;
  Rng flip_rng(mix_seed(config.seed, 0xF11B));
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : batches(source.size(), config.batch_size, config.seed, true, epoch)) {
      auto x = take_rows<float>(source.images, idx);
      if (config.flip) random_horizontal_flip(x, flip_rng);
      const auto y = take_labels(source.labels, idx);
      const auto out = model.forward(x);
      auto loss = cross_entropy(out.logits, y);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
      correct += count_correct(out.logits, y);
      backward(loss);
      opt.step(model.params());
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, source.size()));
    history.push_back({epoch, "train", loss_sum / n, static_cast<double>(correct) / n});
  }
  return history;
}

}  // namespace lorvp
