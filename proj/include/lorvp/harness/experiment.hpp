#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lorvp/backbones/checkpoint.hpp"
#include "lorvp/data/normalize.hpp"
#include "lorvp/harness/config.hpp"
#include "lorvp/harness/data.hpp"
#include "lorvp/nn/loss.hpp"
#include "lorvp/outmap/ilm.hpp"
#include "lorvp/outmap/transform.hpp"
#include "lorvp/prompts/export.hpp"
#include "lorvp/prompts/prompt.hpp"

namespace lorvp {

struct Report {
  ExperimentConfig config;
  std::string design_label;
  std::optional<PromptDesign> design;
  double final_accuracy = 0.0;  // best test accuracy over trained epochs
  std::size_t best_epoch = 0;
  double last_accuracy = 0.0;
  double baseline_accuracy = 0.0;  // epoch 0, before any step
  History metrics;
  std::size_t vp_param_count = 0;
  std::size_t head_param_count = 0;
  std::size_t tunable_param_count = 0;
  double wall_time_s = 0.0;
  std::size_t epochs_run = 0;
  std::uint64_t checksum_before = 0;
  std::uint64_t checksum_after = 0;
  std::vector<std::string> trained_parameters;
  ChannelStats normalization;
  std::optional<LabelMap> label_map;
};

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline Json report_json(const Report& r) {
  Json metrics = Json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back(Json{{"epoch", m.epoch}, {"split", m.split}, {"loss", m.loss}, {"accuracy", m.accuracy}});
  }
  Json j{{"design", r.design_label},
         {"transform", to_string(r.config.transform)},
         {"final_accuracy", r.final_accuracy},
         {"best_epoch", r.best_epoch},
         {"last_accuracy", r.last_accuracy},
         {"baseline_accuracy", r.baseline_accuracy},
         {"epochs_run", r.epochs_run},
         {"vp_param_count", r.vp_param_count},
         {"head_param_count", r.head_param_count},
         {"tunable_param_count", r.tunable_param_count},
         {"wall_time_s", r.wall_time_s},
         {"backbone_checksum_before", hex64(r.checksum_before)},
         {"backbone_checksum_after", hex64(r.checksum_after)},
         {"trained_parameters", r.trained_parameters},
         {"normalization", Json{{"mean", r.normalization.mean}, {"std", r.normalization.std}}},
         {"metrics", metrics}};
  if (r.label_map) j["label_map"] = r.label_map->target_to_source();
  j["config"] = to_json(r.config);
  return j;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

namespace harness_detail {

// Everything one adaptation run trains or reads, in 32-bit.
struct Pipeline {
  const Backbone<float>* model = nullptr;
  std::optional<Prompt<float>> prompt;
  OutputTransform<float> transform;
  bool pixel_space = false;
  Tensor<float> mean, inv_std;  // [c, 1, 1], pixel space only

  // Prompt-free canvas at model resolution.
  Tensor<float> prepare(const Tensor<float>& raw) const {
    if (prompt) return prepare_input(prompt->design(), raw);
    const std::size_t L = model->config().resolution;
    if (raw.dim(2) == L && raw.dim(3) == L) return raw;
    return bilinear_resize(raw, static_cast<long>(L));
  }

  Tensor<float> prepare(const Tensor<float>& images, std::span<const std::size_t> rows) const {
    return prepare(take_rows<float>(images, rows));
  }

  Tensor<float> model_input(const Tensor<float>& prepared, const std::optional<Tensor<float>>& vp) const {
    auto x = vp ? add(prepared, *vp) : prepared;
    return pixel_space ? mul(sub(x, mean), inv_std) : x;
  }

  Tensor<float> logits(const Tensor<float>& prepared, const std::optional<Tensor<float>>& vp) const {
    return transform(model->forward(model_input(prepared, vp)));
  }

  std::optional<Tensor<float>> vp() const {
    if (!prompt) return std::nullopt;
    return prompt->materialize();
  }
};

inline std::size_t workers_of(const ExperimentConfig& c) { return c.eval_workers ? c.eval_workers : default_workers(); }

inline EvalResult evaluate(const Pipeline& p, const Tensor<float>& images, const std::vector<int>& labels,
                           std::size_t batch_size, std::size_t workers) {
  std::optional<Tensor<float>> vp;
  {
    NoGradGuard no_grad;
    vp = p.vp();
  }
  const auto groups = batches(labels.size(), batch_size, 0, false);
  struct Part {
    double loss = 0.0;
    std::size_t correct = 0;
  };
  auto parts = parallel_map<Part>(
      groups.size(),
      [&](std::size_t g) {
        NoGradGuard no_grad;
        const auto y = take_labels(labels, groups[g]);
        const auto logits = p.logits(p.prepare(images, groups[g]), vp);
        return Part{static_cast<double>(cross_entropy(logits, y).item()) * static_cast<double>(y.size()),
                    count_correct(logits, y)};
      },
      workers);
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& part : parts) {
    loss += part.loss;
    correct += part.correct;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, labels.size()));
  return {loss / n, static_cast<double>(correct) / n};
}

inline CountMatrix counts_for(const Pipeline& p, const Tensor<float>& images, const std::vector<int>& labels,
                              std::size_t num_target, std::size_t batch_size, std::size_t workers) {
  std::optional<Tensor<float>> vp;
  {
    NoGradGuard no_grad;
    vp = p.vp();
  }
  const auto groups = batches(labels.size(), batch_size, 0, false);
  const std::size_t Ks = p.model->num_source_classes();
  auto parts = parallel_map<CountMatrix>(
      groups.size(),
      [&](std::size_t g) {
        NoGradGuard no_grad;
        CountMatrix c(num_target, std::vector<std::uint64_t>(Ks, 0));
        const auto x = p.model_input(p.prepare(images, groups[g]), vp);
        accumulate_counts(c, p.model->forward(x).logits, take_labels(labels, groups[g]));
        return c;
      },
      workers);
  CountMatrix total(num_target, std::vector<std::uint64_t>(Ks, 0));
  for (const auto& c : parts)
    for (std::size_t t = 0; t < num_target; ++t)
      for (std::size_t s = 0; s < Ks; ++s) total[t][s] += c[t][s];
  return total;
}

}  // namespace harness_detail

/// Builds the backbone a config describes: loads `checkpoint` when set,
/// otherwise pretrains from scratch on the source task. Always frozen.
inline Backbone<float> obtain_backbone(const ExperimentConfig& c, History* history = nullptr) {
  if (!c.checkpoint.empty()) {
    auto m = load_checkpoint(c.checkpoint);
    m.freeze();
    return m;
  }
  auto source = load_source(c.dataset);
  auto model = Backbone<float>::build(c.backbone);
  auto h = pretrain(model, normalize(source.train, channel_stats(source.train)), c.pretrain);
  if (history) *history = std::move(h);
  model.freeze();
  return model;
}

/// Optimizes the prompt and (for FM/LP) the head against a frozen backbone;
/// evaluates on the full test split before training and after every epoch.
inline Report adapt(const ExperimentConfig& config, Backbone<float>& model, const TaskData& data) {
  using namespace harness_detail;
  config.validate();
  const auto& bc = model.config();
  const std::size_t Kt = data.train.num_classes, Ks = model.num_source_classes();
  if (!uses_head(config.transform)) check_sizes(Ks, Kt);
  if (data.train.channels != bc.channels || data.test.channels != bc.channels) {
    throw ConfigError("dataset has " + std::to_string(data.train.channels) + " channels, backbone expects " +
                      std::to_string(bc.channels));
  }
  if (data.test.num_classes != Kt) throw DataError("train and test splits disagree on the class count");
  data.train.validate();
  data.test.validate();

  Report report;
  report.config = config;
  model.freeze();
  report.checksum_before = model.checksum();

  report.normalization = channel_stats(data.train);
  const auto train = normalize(data.train, report.normalization);
  const auto test = normalize(data.test, report.normalization);

  Pipeline p;
  p.model = &model;
  p.pixel_space = config.prompt_space == "pixel";
  Tensor<float> train_images = train.images, test_images = test.images;
  if (p.pixel_space) {
    train_images = denormalize(train);
    test_images = denormalize(test);
    std::vector<float> mean, inv;
    for (std::size_t ch = 0; ch < bc.channels; ++ch) {
      mean.push_back(static_cast<float>(report.normalization.mean[ch]));
      inv.push_back(static_cast<float>(1.0 / report.normalization.std[ch]));
    }
    p.mean = Tensor<float>({bc.channels, 1, 1}, mean);
    p.inv_std = Tensor<float>({bc.channels, 1, 1}, inv);
  }
  if (config.has_prompt()) {
    const auto design = make_design(config, bc);
    p.prompt = init_prompt<float>(design, mix_seed(config.seed, 1));
    report.design = design;
    report.design_label = config.design;
    report.vp_param_count = param_count(design);
  } else {
    report.design_label = "none";
  }

  const std::size_t workers = workers_of(config);
  const auto& map_images = config.map_split == "train" ? train_images : test_images;
  const auto& map_labels = config.map_split == "train" ? train.labels : test.labels;
  p.transform.kind = config.transform;
  switch (config.transform) {
    case TransformKind::kRLM:
      p.transform.map = rlm(Ks, Kt, mix_seed(config.seed, 2));
      break;
    case TransformKind::kFLM:
    case TransformKind::kILM:
      p.transform.map = flm(counts_for(p, map_images, map_labels, Kt, config.batch_size, workers));
      break;
    case TransformKind::kFM:
      p.transform.head = make_head<float>(TransformKind::kFM, Ks, Kt, mix_seed(config.seed, 3));
      break;
    case TransformKind::kLP:
      p.transform.head = make_head<float>(TransformKind::kLP, model.feature_dim(), Kt, mix_seed(config.seed, 3));
      break;
  }
  report.head_param_count = p.transform.param_count();
  report.tunable_param_count = report.vp_param_count + report.head_param_count;

  // One optimizer over prompt and head together.
  ParamStore<float> tunable;
  if (config.has_prompt()) {
    for (const auto& e : p.prompt->params().entries()) tunable.add("prompt." + e.name, e.value);
  }
  if (p.transform.head) {
    for (const auto& e : p.transform.head->params.entries()) tunable.add("head." + e.name, e.value);
  }
  std::set<std::string> expected_trained;
  for (const auto& e : tunable.entries()) expected_trained.insert(e.name);

  const auto initial = evaluate(p, test_images, test.labels, config.batch_size, workers);
  report.metrics.push_back({0, "test", initial.loss, initial.accuracy});
  report.baseline_accuracy = initial.accuracy;
  report.final_accuracy = initial.accuracy;
  report.last_accuracy = initial.accuracy;

  Sgd<float> opt({config.lr, config.momentum, config.weight_decay});
  Rng flip_rng(mix_seed(config.seed, 4));
  std::set<std::string> trained;
  double train_seconds = 0.0;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.cosine) opt.set_lr(cosine_lr(config.lr, epoch - 1, config.epochs));
    if (config.transform == TransformKind::kILM) {
      p.transform.map = flm(counts_for(p, map_images, map_labels, Kt, config.batch_size, workers));
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : batches(train.size(), config.batch_size, mix_seed(config.seed, 5), true, epoch)) {
      auto raw = take_rows<float>(train_images, idx);
      if (config.flip) random_horizontal_flip(raw, flip_rng);
      const auto prepared = p.prepare(raw);
      const auto y = take_labels(train.labels, idx);
      const auto logits = p.logits(prepared, p.vp());
      auto loss = cross_entropy(logits, y);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(y.size());
      correct += count_correct(logits, y);
      if (tunable.size() == 0) {
        Tape<float>::current().clear();
        continue;
      }
      backward(loss);
      for (const auto& e : model.params().entries()) {
        if (e.value.has_grad()) throw VerificationError("backbone parameter '" + e.name + "' received a gradient");
      }
      for (const auto& e : tunable.entries()) {
        if (e.value.has_grad()) trained.insert(e.name);
      }
      opt.step(tunable);
    }
    train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double n = static_cast<double>(std::max<std::size_t>(1, train.size()));
    report.metrics.push_back({epoch, "train", loss_sum / n, static_cast<double>(correct) / n});
    const auto ev = evaluate(p, test_images, test.labels, config.batch_size, workers);
    report.metrics.push_back({epoch, "test", ev.loss, ev.accuracy});
    report.last_accuracy = ev.accuracy;
    if (!have_best || ev.accuracy > report.final_accuracy) {
      report.final_accuracy = ev.accuracy;
      report.best_epoch = epoch;
      have_best = true;
    }
    report.epochs_run = epoch;
  }
  if (config.epochs > 0 && trained != expected_trained) {
    throw VerificationError("updated parameter set differs from {prompt} + {head}");
  }
  report.trained_parameters.assign(trained.begin(), trained.end());
  report.wall_time_s = config.canonical ? 0.0 : train_seconds;
  report.label_map = p.transform.map;
  report.checksum_after = model.checksum();
  if (report.checksum_after != report.checksum_before) {
    throw VerificationError("backbone parameters changed during adaptation (" + hex64(report.checksum_before) +
                            " -> " + hex64(report.checksum_after) + ")");
  }
  if (!config.output_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    std::ofstream(dir / "metrics.csv", std::ios::binary) << metrics_csv(report.metrics);
    std::ofstream(dir / "report.json", std::ios::binary) << report_json(report).dump(2) << "\n";
    if (report.label_map) std::ofstream(dir / "label_map.csv", std::ios::binary) << label_map_csv(*report.label_map);
    if (config.has_prompt()) {
      NoGradGuard no_grad;
      const auto vp = p.prompt->materialize();
      export_prompt_image(vp, dir / (bc.channels == 3 ? "prompt.ppm" : "prompt.pgm"));
      export_prompt_raw(vp, dir / "prompt.raw");
    }
  }
  return report;
}

/// adapt() on the backbone and target data the config names.
inline Report run_adaptation(const ExperimentConfig& config) {
  config.validate();
  auto model = obtain_backbone(config);
  return adapt(config, model, load_target(config.dataset));
}

}  // namespace lorvp
