#pragma once

#include "lorvp/backbones/backbone.hpp"
#include "lorvp/data/batches.hpp"
#include "lorvp/outmap/label_map.hpp"
#include "lorvp/prompts/prompt.hpp"
#include "lorvp/util/parallel.hpp"

namespace lorvp {

/// Target-by-source prediction counts of the frozen model on prompted
/// inputs. `prepared` holds prepare_input() canvases [N, c, L, L].
template <Real T>
CountMatrix prediction_counts(const Backbone<T>& model, const Prompt<T>& prompt, const Tensor<T>& prepared,
                              const std::vector<int>& labels, std::size_t num_target, std::size_t batch_size,
                              std::size_t workers = default_workers()) {
  const auto groups = batches(labels.size(), batch_size, 0, false);
  Tensor<T> vp;
  {
    NoGradGuard no_grad;
    vp = prompt.materialize();
  }
  auto partial = parallel_map<CountMatrix>(
      groups.size(),
      [&](std::size_t g) {
        NoGradGuard no_grad;
        CountMatrix c(num_target, std::vector<std::uint64_t>(model.num_source_classes(), 0));
        const auto x = add(take_rows<T>(prepared, groups[g]), vp);
        accumulate_counts(c, model.forward(x).logits, take_labels(labels, groups[g]));
        return c;
      },
      workers);
  CountMatrix counts(num_target, std::vector<std::uint64_t>(model.num_source_classes(), 0));
  for (const auto& c : partial)
    for (std::size_t t = 0; t < num_target; ++t)
      for (std::size_t s = 0; s < c[t].size(); ++s) counts[t][s] += c[t][s];
  return counts;
}

/// Frequency mapping recomputed from a full pass with the current prompt.
template <Real T>
LabelMap ilm_refresh(const Backbone<T>& model, const Prompt<T>& prompt, const Tensor<T>& prepared,
                     const std::vector<int>& labels, std::size_t num_target, std::size_t batch_size = 256,
                     std::size_t workers = default_workers()) {
  check_sizes(model.num_source_classes(), num_target);
  return flm(prediction_counts(model, prompt, prepared, labels, num_target, batch_size, workers));
}

}  // namespace lorvp
