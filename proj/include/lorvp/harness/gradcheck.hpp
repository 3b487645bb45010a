#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lorvp/harness/experiment.hpp"
#include "lorvp/tensor/finite_diff.hpp"

namespace lorvp {

struct GradcheckEntry {
  std::string name;
  double relative_error = 0.0;
};

struct GradcheckReport {
  bool passed = true;
  double max_error = 0.0;
  double tolerance = 1e-4;
  std::vector<GradcheckEntry> entries;
  std::vector<std::string> ops;            // distinct ops in the checked graph
  std::vector<std::string> offending_ops;  // filled on failure

  std::string summary() const {
    std::string out;
    for (const auto& e : entries) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-16s rel_error %.3e %s\n", e.name.c_str(), e.relative_error,
                    e.relative_error < tolerance ? "ok" : "FAIL");
      out += buf;
    }
    if (!passed) {
      out += "offending op:";
      for (const auto& op : offending_ops) out += " " + op;
      if (offending_ops.empty()) out += " (none isolated)";
      out += "\n";
    }
    return out;
  }
};

namespace gradcheck_detail {

using Build = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

inline Tensor<double> randn(Shape shape, Rng& rng, double stddev = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Worst per-tensor relative error of tape gradients against central
// differences; the floor is 1e-6 of the largest analytic norm.
inline std::vector<double> compare(std::vector<Tensor<double>> inputs, const Build& build, double eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  backward(build(inputs));
  std::vector<std::vector<double>> analytic;
  double scale = 0.0;
  for (auto& t : inputs) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
    scale = std::max(scale, l2_norm<double>(analytic.back()));
    t.clear_grad();
  }
  std::vector<double> errors;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto numeric = finite_diff_param<double>([&] { return build(inputs).item(); }, inputs[i], eps);
    errors.push_back(relative_error<double>(analytic[i], numeric, 1e-6 * scale));
  }
  return errors;
}

// A small isolated check for each recorded op. Everything except the sum
// and mul checks reduces with sum(mul(op(x), w)), so those two go first.
inline std::optional<double> op_selfcheck(const std::string& op, double eps) {
  Checksum tag;
  tag.update(op);
  Rng rng(mix_seed(0x5E1F, tag.value()));
  const auto worst = [&](std::vector<Tensor<double>> in, const Build& f) {
    const auto e = compare(std::move(in), f, eps);
    return *std::max_element(e.begin(), e.end());
  };
  const auto weighted = [](const Tensor<double>& y, const Tensor<double>& w) { return sum(mul(y, w)); };
  auto x = randn({2, 3, 4}, rng);
  if (op == "sum") return worst({x}, [](const auto& in) { return sum(in[0]); });
  if (op == "mul") return worst({x, randn({2, 3, 4}, rng)}, [](const auto& in) { return sum(mul(in[0], in[1])); });
  const auto w = randn({2, 3, 4}, rng);
  if (op == "add" || op == "sub") {
    return worst({x, randn({3, 4}, rng)}, [&](const auto& in) {
      return weighted(op == "add" ? add(in[0], in[1]) : sub(in[0], in[1]), w);
    });
  }
  if (op == "scale") return worst({x}, [&](const auto& in) { return weighted(scale(in[0], 1.7), w); });
  if (op == "relu") {
    for (auto& v : x.mutable_data()) v += v > 0 ? 0.1 : -0.1;  // keep clear of the kink
    return worst({x}, [&](const auto& in) { return weighted(relu(in[0]), w); });
  }
  if (op == "gelu") return worst({x}, [&](const auto& in) { return weighted(gelu(in[0]), w); });
  if (op == "softmax") return worst({x}, [&](const auto& in) { return weighted(softmax(in[0]), w); });
  if (op == "sum_axis") {
    const auto w2 = randn({2, 4}, rng);
    return worst({x}, [&](const auto& in) { return weighted(sum_axis(in[0], 1), w2); });
  }
  if (op == "reshape") {
    const auto w2 = randn({6, 4}, rng);
    return worst({x}, [&](const auto& in) { return weighted(reshape(in[0], {6, 4}), w2); });
  }
  if (op == "permute") {
    const auto w2 = randn({4, 2, 3}, rng);
    return worst({x}, [&](const auto& in) { return weighted(permute(in[0], {2, 0, 1}), w2); });
  }
  if (op == "gather") {
    const std::vector<std::int64_t> idx{3, -1, 0, 3, 1};
    const auto w2 = randn({2, 3, 5}, rng);
    return worst({x}, [&](const auto& in) { return weighted(gather_last(in[0], idx), w2); });
  }
  if (op == "matmul") {
    const auto w2 = randn({2, 3, 5}, rng);
    return worst({x, randn({4, 5}, rng)}, [&](const auto& in) { return weighted(matmul(in[0], in[1]), w2); });
  }
  if (op == "layernorm") {
    return worst({x, randn({4}, rng), randn({4}, rng)},
                 [&](const auto& in) { return weighted(layernorm(in[0], in[1], in[2]), w); });
  }
  if (op == "linear") {
    const auto w2 = randn({2, 3, 2}, rng);
    return worst({x, randn({2, 4}, rng), randn({2}, rng)}, [&](const auto& in) {
      return weighted(linear(in[0], in[1], std::optional<Tensor<double>>(in[2])), w2);
    });
  }
  if (op == "conv2d") {
    const auto img = randn({1, 2, 5, 5}, rng);
    const auto w2 = randn({1, 3, 3, 3}, rng);
    return worst({img, randn({3, 2, 3, 3}, rng), randn({3}, rng)}, [&](const auto& in) {
      return weighted(conv2d(in[0], in[1], std::optional<Tensor<double>>(in[2]), {2, 1}), w2);
    });
  }
  if (op == "bilinear_resize") {
    const auto w2 = randn({2, 3, 7, 7}, rng);
    return worst({randn({2, 3, 4, 5}, rng)}, [&](const auto& in) { return weighted(bilinear_resize(in[0], 7), w2); });
  }
  if (op == "cross_entropy") {
    const std::vector<int> y{1, 0, 3};
    return worst({randn({3, 4}, rng)}, [&](const auto& in) { return cross_entropy(in[0], y); });
  }
  return std::nullopt;
}

// Names the ops whose isolated checks fail.
inline std::vector<std::string> diagnose(const std::vector<std::string>& ops, double tol, double eps) {
  for (const std::string base : {"sum", "mul"}) {
    if (op_selfcheck(base, eps).value() >= tol) return {base};
  }
  std::vector<std::string> bad;
  for (const auto& op : ops) {
    if (op == "sum" || op == "mul") continue;
    const auto err = op_selfcheck(op, eps);
    if (err && *err >= tol) bad.push_back(op);
  }
  return bad;
}

}  // namespace gradcheck_detail

/// Tape gradients of the prompt and head parameters against central
/// differences through resize, prompt, frozen backbone, transform and loss,
/// in 64-bit on one small batch. The prompt is randomized first so every
/// factor has a nonzero gradient.
inline GradcheckReport gradcheck(const ExperimentConfig& config, double tol = 1e-4, double eps = 1e-4,
                                 std::size_t batch = 2) {
  using namespace gradcheck_detail;
  config.validate();
  Backbone<double> model = config.checkpoint.empty() ? Backbone<double>::build(config.backbone)
                                                      : load_checkpoint(config.checkpoint).cast<double>();
  model.freeze();
  const auto& bc = model.config();
  const std::size_t Ks = model.num_source_classes(), Kt = config.dataset.num_classes;
  if (!uses_head(config.transform)) check_sizes(Ks, Kt);

  Rng rng(mix_seed(config.seed, 0x6C));
  const std::size_t side = std::max<std::size_t>(2, bc.resolution - bc.resolution / 4);
  const auto images = randn({batch, bc.channels, side, side}, rng);
  std::vector<int> labels(batch);
  for (auto& y : labels) y = static_cast<int>(rng.below(Kt));

  std::optional<Prompt<double>> prompt;
  std::vector<std::pair<std::string, Tensor<double>>> checked;
  if (config.has_prompt()) {
    prompt = init_prompt<double>(make_design(config, bc), mix_seed(config.seed, 1));
    for (const auto& e : prompt->params().entries()) {
      Tensor<double> t = e.value;
      if (e.name != "A") {
        for (auto& v : t.mutable_data()) v = rng.normal(0.0, 0.1);
      }
      checked.emplace_back("prompt." + e.name, t);
    }
  }
  const auto canvas = [&] {
    return prompt ? prepare_input(prompt->design(), images) : bilinear_resize(images, static_cast<long>(bc.resolution));
  }();

  OutputTransform<double> m;
  m.kind = config.transform;
  if (uses_head(config.transform)) {
    const std::size_t in = config.transform == TransformKind::kLP ? model.feature_dim() : Ks;
    m.head = make_head<double>(config.transform, in, Kt, mix_seed(config.seed, 3));
    for (const auto& e : m.head->params.entries()) checked.emplace_back("head." + e.name, e.value);
  } else if (config.transform == TransformKind::kRLM) {
    m.map = rlm(Ks, Kt, mix_seed(config.seed, 2));
  } else {
    NoGradGuard no_grad;
    CountMatrix counts(Kt, std::vector<std::uint64_t>(Ks, 0));
    const auto x = prompt ? apply_prepared(*prompt, canvas) : canvas;
    accumulate_counts(counts, model.forward(x).logits, labels);
    m.map = flm(counts);
  }

  const Build build = [&](const std::vector<Tensor<double>>&) {
    const auto x = prompt ? apply_prepared(*prompt, canvas) : canvas;
    return cross_entropy(m(model.forward(x)), labels);
  };

  GradcheckReport report;
  report.tolerance = tol;
  {
    auto probe = build({});
    for (auto op : Tape<double>::current().ops()) {
      const std::string name(op);
      if (std::find(report.ops.begin(), report.ops.end(), name) == report.ops.end()) report.ops.push_back(name);
    }
    Tape<double>::current().clear();
  }
  std::vector<Tensor<double>> inputs;
  for (const auto& [name, t] : checked) inputs.push_back(t);
  const auto errors = compare(inputs, build, eps);
  for (std::size_t i = 0; i < checked.size(); ++i) {
    report.entries.push_back({checked[i].first, errors[i]});
    report.max_error = std::max(report.max_error, errors[i]);
    if (!(errors[i] < tol)) report.passed = false;
  }
  for (const auto& e : model.params().entries()) {
    if (e.value.has_grad()) throw VerificationError("backbone parameter '" + e.name + "' received a gradient");
  }
  if (!report.passed) report.offending_ops = diagnose(report.ops, tol, eps);
  return report;
}

}  // namespace lorvp
