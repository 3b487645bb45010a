// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Set LORVP_CIFAR10_DIR to also check a real
// CIFAR-10 batch file.

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lorvp/data/cifar10.hpp"
#include "lorvp/harness/gradcheck.hpp"
#include "lorvp/harness/studies.hpp"

namespace fs = std::filesystem;
using namespace lorvp;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "lorvp_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Backbone pretrained once on the synthetic source task; built inside the
// transfer check (so its time counts there) and reused by later checks.
ExperimentConfig transfer_config() {
  auto c = ExperimentConfig::defaults(Profile::kDesk);
  c.backbone.kind = BackboneKind::kTinyCnn;
  c.dataset.separation = 0.1;
  c.design = "lorvp";
  c.transform = TransformKind::kLP;
  c.rank = 4;
  c.epochs = 10;
  c.canonical = true;
  return c;
}

struct Shared {
  ExperimentConfig config = transfer_config();
  Backbone<float> model = obtain_backbone(config);
  TaskData data = load_target(config.dataset);
  std::uint64_t checksum = model.checksum();
  std::vector<std::string> drift;  // every checksum mismatch seen anywhere

  void audit(const Report& r, const std::string& what) {
    if (r.checksum_before != checksum || r.checksum_after != checksum || model.checksum() != checksum) {
      drift.push_back(what);
    }
  }
};

Shared& shared() {
  static Shared s;
  return s;
}

Outcome param_counts() {
  const auto lorvp = param_count(PromptDesign::lorvp(3, 224, 4));
  const auto pad = param_count(PromptDesign::pad(3, 224, 128, 48));
  return {lorvp == 5376 && pad == 101376,
          "lorvp=" + std::to_string(lorvp) + " pad=" + std::to_string(pad)};
}

Outcome zero_init_identity() {
  Rng rng(11);
  std::vector<float> px(4 * 3 * 28 * 28);
  for (auto& v : px) v = float(rng.normal());
  const Tensor<float> x({4, 3, 28, 28}, px);
  std::size_t checked = 0, mismatched = 0;
  for (auto kind : {BackboneKind::kTinyCnn, BackboneKind::kTinyVit}) {
    BackboneConfig bc;
    bc.kind = kind;
    auto model = Backbone<float>::build(bc);
    model.freeze();
    NoGradGuard no_grad;
    for (auto k : {DesignKind::kPad, DesignKind::kPatchPad, DesignKind::kPatchFree, DesignKind::kPatchSame,
                   DesignKind::kLoRVP}) {
      const auto d = default_design(k, 3, bc.resolution, bc.patch_size);
      const auto prompted = model.forward(apply(init_prompt<float>(d, 5), x)).logits;
      const auto plain = model.forward(prepare_input(d, x)).logits;
      ++checked;
      const auto a = prompted.data(), b = plain.data();
      if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) ++mismatched;
    }
  }
  return {mismatched == 0, std::to_string(checked - mismatched) + "/" + std::to_string(checked) + " bitwise equal"};
}

Outcome rank_bound() {
  std::size_t violations = 0;
  double worst = 0.0;
  const std::size_t L = 32;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t r = 1 + seed % 8;
    auto p = init_prompt<double>(PromptDesign::lorvp(3, L, r), seed);
    Rng rng(mix_seed(seed, 77));
    for (auto& e : p.params().entries())
      for (auto& v : Tensor<double>(e.value).mutable_data()) v = rng.normal();
    const auto vp = p.materialize();
    for (std::size_t ch = 0; ch < 3; ++ch) {
      Eigen::MatrixXd m(L, L);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) m(long(i), long(j)) = vp[(ch * L + i) * L + j];
      const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
      for (std::size_t k = r; k < L; ++k) {
        worst = std::max(worst, s(long(k)) / s(0));
        if (s(long(k)) >= 1e-5 * s(0)) ++violations;
      }
    }
  }
  return {violations == 0, "max sigma_(r+1)/sigma_1 " + fmt("%.2e", worst)};
}

Outcome gradient_oracle() {
  struct Case {
    BackboneKind backbone;
    const char* design;
    TransformKind transform;
  };
  const Case cases[] = {
      {BackboneKind::kTinyCnn, "lorvp", TransformKind::kLP}, {BackboneKind::kTinyCnn, "lorvp", TransformKind::kFM},
      {BackboneKind::kTinyCnn, "pad", TransformKind::kLP},   {BackboneKind::kTinyVit, "lorvp", TransformKind::kLP},
      {BackboneKind::kTinyVit, "lorvp", TransformKind::kFM}, {BackboneKind::kTinyVit, "pad", TransformKind::kLP},
  };
  bool ok = true;
  double worst = 0.0;
  std::string failures;
  for (const auto& k : cases) {
    auto c = ExperimentConfig::defaults(Profile::kDesk);
    c.backbone.kind = k.backbone;
    c.design = k.design;
    c.transform = k.transform;
    const auto r = gradcheck(c, 1e-4, 1e-4);
    worst = std::max(worst, r.max_error);
    if (!r.passed) {
      ok = false;
      failures += " " + to_string(k.backbone) + "/" + k.design + "/" + to_string(k.transform);
    }
  }
  return {ok, "6 cases, max rel error " + fmt("%.2e", worst) + (failures.empty() ? "" : ", failed:" + failures)};
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (auto x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

Outcome transfer_signal() {
  auto& s = shared();
  std::vector<double> lorvp, patch_pad, baseline;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = s.config;
    c.seed = seed;
    auto r = adapt(c, s.model, s.data);
    s.audit(r, "adapt lorvp seed " + std::to_string(seed));
    lorvp.push_back(r.final_accuracy);

    c.design = "patch_pad";
    r = adapt(c, s.model, s.data);
    s.audit(r, "adapt patch_pad seed " + std::to_string(seed));
    patch_pad.push_back(r.final_accuracy);

    c.design = "lorvp";
    c.epochs = 0;
    r = adapt(c, s.model, s.data);
    s.audit(r, "adapt baseline seed " + std::to_string(seed));
    baseline.push_back(r.final_accuracy);
  }
  const double ml = mean(lorvp), mp = mean(patch_pad), mb = mean(baseline);
  return {ml >= mb + 0.05 && ml > mp,
          "lorvp " + fmt("%.4f", ml) + ", patch_pad " + fmt("%.4f", mp) + ", epochs=0 baseline " + fmt("%.4f", mb)};
}

struct Toy {
  Backbone<float> model;
  NormalizedDataset target;
};

Toy toy_task(std::uint64_t seed) {
  SyntheticSpec src;
  src.num_samples = 300;
  src.num_classes = 6;
  src.separation = 0.9;
  src.seed = seed;
  auto source = gen_synthetic(src);
  const auto stats = channel_stats(source);
  BackboneConfig c;
  c.kind = BackboneKind::kTinyCnn;
  c.embed_dim = 16;
  c.num_source_classes = 6;
  c.seed = seed;
  auto model = Backbone<float>::build(c);
  PretrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 32;
  tc.seed = seed;
  pretrain(model, normalize(source, stats), tc);
  model.freeze();
  auto tgt = target_of(src, 30.0);
  tgt.num_classes = 4;
  return {std::move(model), normalize(gen_synthetic(tgt), stats)};
}

bool valid_map(const LabelMap& m, std::size_t Ks, std::size_t Kt) {
  if (m.num_target() != Kt) return false;
  std::vector<int> seen(Ks, 0);
  for (std::size_t t = 0; t < Kt; ++t)
    if (m[t] >= Ks || ++seen[m[t]] > 1) return false;
  return true;
}

Outcome label_mapping() {
  const CountMatrix example{{3, 0, 1}, {2, 5, 0}};
  const auto m = flm(example);
  const bool example_ok = m.num_target() == 2 && m[0] == 0 && m[1] == 1;

  Rng rng(2024);
  std::size_t invalid = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t Ks = 1 + rng.below(20);
    const std::size_t Kt = 1 + rng.below(Ks);
    CountMatrix c(Kt, std::vector<std::uint64_t>(Ks));
    for (auto& row : c)
      for (auto& v : row) v = rng.below(4);
    if (!valid_map(flm(c), Ks, Kt) || !valid_map(rlm(Ks, Kt, std::uint64_t(trial)), Ks, Kt)) ++invalid;
  }

  double ilm_loss = 0, rlm_loss = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto toy = toy_task(seed);
    auto prompt = init_prompt<float>(PromptDesign::lorvp(3, 32, 4), seed);
    auto x = prepare_input(prompt.design(), toy.target.images);
    const auto refreshed = ilm_refresh(toy.model, prompt, x, toy.target.labels, 4);
    NoGradGuard no_grad;
    const auto logits = toy.model.forward(apply_prepared(prompt, x)).logits;
    ilm_loss += cross_entropy(transform(logits, refreshed), toy.target.labels).item();
    rlm_loss += cross_entropy(transform(logits, rlm(6, 4, seed)), toy.target.labels).item();
  }
  ilm_loss /= 3;
  rlm_loss /= 3;
  return {example_ok && invalid == 0 && ilm_loss <= rlm_loss,
          std::string("worked example ") + (example_ok ? "ok" : "wrong") + ", invalid maps " +
              std::to_string(invalid) + "/1000, ILM loss " + fmt("%.4f", ilm_loss) + " vs RLM " +
              fmt("%.4f", rlm_loss)};
}

Outcome determinism() {
  auto& s = shared();
  auto c = s.config;
  c.transform = TransformKind::kILM;
  c.epochs = 3;
  c.seed = 9;
  c.output_dir = (scratch() / "determinism").string();
  std::string metrics[2], report[2];
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(c.output_dir);
    s.audit(adapt(c, s.model, s.data), "determinism run");
    metrics[run] = slurp(fs::path(c.output_dir) / "metrics.csv");
    report[run] = slurp(fs::path(c.output_dir) / "report.json");
  }
  const bool ok = !metrics[0].empty() && !report[0].empty() && metrics[0] == metrics[1] && report[0] == report[1];
  return {ok, "metrics.csv " + std::to_string(metrics[0].size()) + " B, report.json " +
                  std::to_string(report[0].size()) + " B" + (ok ? ", identical" : ", differ")};
}

Outcome format_fidelity() {
  SyntheticSpec spec;
  spec.num_samples = 500;
  spec.seed = 31;
  const auto ds = gen_synthetic(spec);
  const auto a = scratch() / "synthetic_a.bin", b = scratch() / "synthetic_b.bin";
  cifar10::write_batch(a, ds);
  const auto back = cifar10::read_batch(a, "train");
  cifar10::write_batch(b, back);
  bool ok = back.pixels == ds.pixels && back.labels == ds.labels && slurp(a) == slurp(b);
  std::string detail = std::string("synthetic roundtrip ") + (ok ? "bitwise" : "differs");

  if (const char* dir = std::getenv("LORVP_CIFAR10_DIR"); dir && *dir) {
    const auto real = fs::path(dir) / "data_batch_1.bin";
    const auto batch = cifar10::read_batch(real, "train", cifar10::kRecordsPerFile);
    bool labels_ok = true;
    for (int y : batch.labels) labels_ok = labels_ok && y >= 0 && y <= 9;
    const auto copy = scratch() / "cifar_copy.bin";
    cifar10::write_batch(copy, batch);
    const bool same = slurp(copy) == slurp(real);
    ok = ok && batch.size() == 10000 && labels_ok && same;
    detail += ", real batch N=" + std::to_string(batch.size()) + (same ? " reserialized identically" : " differs");
  } else {
    detail += ", real batch skipped (LORVP_CIFAR10_DIR unset)";
  }
  return {ok, detail};
}

Outcome frozen_contract() {
  auto& s = shared();
  auto c = s.config;
  c.epochs = 1;
  c.seeds = {1, 2};
  const auto table = compare_designs(c, s.model, s.data);
  for (const auto& r : table.reports) s.audit(r, "compare " + r.design_label);
  c.seeds.clear();
  rank_sweep(c, s.model, s.data, {1, 2, 4, 8, 16});
  if (s.model.checksum() != s.checksum) s.drift.push_back("rank-sweep");
  std::string detail = "checksum " + hex64(s.checksum) + " across adapt, compare (" +
                       std::to_string(table.reports.size()) + " runs) and rank-sweep";
  if (!s.drift.empty()) detail += "; drift in " + s.drift.front();
  return {s.drift.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"parameter counts", 1, param_counts},
      {"zero-init identity", 10, zero_init_identity},
      {"rank bound", 30, rank_bound},
      {"gradient oracle", 120, gradient_oracle},
      {"transfer signal", 900, transfer_signal},
      {"label mapping", 60, label_mapping},
      {"determinism", 300, determinism},
      {"format fidelity", 30, format_fidelity},
      {"frozen contract", 900, frozen_contract},
  };
  int failed = 0, index = 0;
  for (const auto& c : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.ok && in_time;
    if (!pass) ++failed;
    std::printf("%s %d %s: %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
