#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nir/render.hpp"
#include "nir/synth.hpp"
#include "nir/trainer.hpp"

using nir::BurstSequence;
using nir::Image;
using nir::MotionKind;
using nir::Normalization;
using nir::Rng;
using nir::Task;
using nir::TaskConfig;
using nir::Tensor;
using nir::Trainer;

namespace {

BurstSequence constant_burst(std::size_t t, std::size_t h, std::size_t w, float value) {
  BurstSequence seq;
  seq.norm = Normalization::kUnit;
  for (std::size_t i = 0; i < t; ++i) seq.frames.emplace_back(h, w, 3, value);
  return seq;
}

// Small fuse config usable on tiny bursts.
TaskConfig tiny_fuse_config() {
  TaskConfig c = nir::default_recipe(Task::kFuse);
  c.scene_net.hidden_layers = 2;
  c.scene_net.hidden_units = 24;
  c.motion_net.hidden_layers = 2;
  c.motion_net.hidden_units = 16;
  c.iterations = 50;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("sample_batch: full fraction covers the pixel grid as a multiset") {
  const auto seq = constant_burst(2, 2, 2, 0.5f);
  Rng rng(1);
  const auto batch = nir::sample_batch<float>(seq, 1.0, rng);
  CHECK(batch.coords.shape[0] == 4);  // ceil(1.0 * 2 * 2)
  for (std::size_t i = 0; i < 4; ++i) {
    const float x = batch.coords.at(i, 0);
    const float y = batch.coords.at(i, 1);
    CHECK((x == doctest::Approx(-0.5) || x == doctest::Approx(0.5)));
    CHECK((y == doctest::Approx(-0.5) || y == doctest::Approx(0.5)));
    CHECK(batch.targets.at(i, 0) == 0.5f);
  }
}

TEST_CASE("sample_batch: fixed seed reproduces the batch stream") {
  const auto seq = constant_burst(3, 8, 8, 0.25f);
  Rng a(42), b(42);
  for (int rep = 0; rep < 3; ++rep) {
    const auto ba = nir::sample_batch<float>(seq, 0.5, a);
    const auto bb = nir::sample_batch<float>(seq, 0.5, b);
    CHECK(ba.coords.data == bb.coords.data);
    CHECK(ba.frame_of_row == bb.frame_of_row);
  }
}

TEST_CASE("sample_batch: per-frame frequency uniform within 3 sigma over 1e5 draws") {
  const std::size_t frames = 5;
  const auto seq = constant_burst(frames, 100, 100, 0.5f);
  Rng rng(2024);
  std::vector<std::size_t> counts(frames, 0);
  std::size_t total = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto batch = nir::sample_batch<float>(seq, 1.0, rng);  // 10^4 samples per call
    for (auto f : batch.frame_of_row) ++counts[f];
    total += batch.frame_of_row.size();
  }
  CHECK(total == 100000);
  const double expected = static_cast<double>(total) / frames;
  const double sigma = std::sqrt(static_cast<double>(total) * (1.0 / frames) * (1.0 - 1.0 / frames));
  for (auto c : counts)
    CHECK(std::fabs(static_cast<double>(c) - expected) <= 3.0 * sigma);
}

TEST_CASE("sample_batch rejects empty sequences and bad fractions") {
  BurstSequence empty;
  Rng rng(0);
  CHECK_THROWS_AS((void)nir::sample_batch<float>(empty, 0.5, rng), nir::IngestError);
  const auto seq = constant_burst(2, 4, 4, 0.0f);
  CHECK_THROWS_AS((void)nir::sample_batch<float>(seq, 0.0, rng), nir::ConfigError);
  CHECK_THROWS_AS((void)nir::sample_batch<float>(seq, 1.5, rng), nir::ConfigError);
}

TEST_CASE("default recipes pin the published hyperparameters") {
  const auto moire = nir::default_recipe(Task::kMoire);
  CHECK(moire.iterations == 3000);
  CHECK(moire.batch_fraction == doctest::Approx(0.25));
  CHECK(moire.lr == doctest::Approx(1e-4));
  CHECK(moire.weights.interf == doctest::Approx(0.001));
  CHECK(moire.weights.excl == doctest::Approx(0.002));
  CHECK(moire.motion == MotionKind::kHomography);
  CHECK(moire.motion_net.activation == nir::Activation::kRelu);
  CHECK(moire.motion_net.hidden_layers == 2);
  CHECK(moire.motion_net.hidden_units == 256);
  CHECK(moire.motion_net.identity_bias);
  CHECK(moire.scene_net.hidden_layers == 4);
  CHECK(moire.scene_net.hidden_units == 256);
  CHECK(moire.interf_net->hidden_units == 128);
  CHECK(moire.normalization == Normalization::kSigned);

  const auto refl = nir::default_recipe(Task::kReflection);
  CHECK(refl.weights.interf == doctest::Approx(0.1));
  CHECK(refl.weights.tvflow == doctest::Approx(0.02));
  CHECK(refl.weights.excl == doctest::Approx(0.001));
  CHECK(refl.iterations == 5000);
  CHECK(refl.batch_fraction == doctest::Approx(1.0 / 32.0));
  CHECK(refl.motion == MotionKind::kFlow);

  const auto rain = nir::default_recipe(Task::kRain);
  CHECK(rain.weights.tvflow == doctest::Approx(0.02));
  CHECK(rain.weights.interf == doctest::Approx(0.01));
  CHECK(rain.motion == MotionKind::kFlowW);
  CHECK(rain.scene_net.hidden_layers == 5);
  CHECK(rain.iterations == 5000);

  // fence defaults to occlusion-free flow; the aware variant is a switch
  const auto fence = nir::default_recipe(Task::kFence);
  CHECK(fence.motion == MotionKind::kFlow);
  const auto fence_aware = nir::default_recipe(Task::kFence, /*occlusion_aware=*/true);
  CHECK(fence_aware.motion == MotionKind::kFlowW);
  CHECK(fence_aware.scene_net.in_dim == 3);

  CHECK_THROWS_AS((void)nir::parse_task("unknown"), nir::ConfigError);
}

TEST_CASE("train_step: loss decreases on a constant burst") {
  const auto seq = constant_burst(2, 8, 8, 0.3f);
  TaskConfig cfg = tiny_fuse_config();
  cfg.iterations = 200;
  Trainer<float> trainer(seq, cfg);
  const auto first = trainer.step();
  nir::LossReport last;
  for (int i = 1; i < 200; ++i) last = trainer.step();
  CHECK(last.total < 0.5 * first.total);
}

TEST_CASE("train_step: identical seeds give identical loss streams") {
  const auto seq = constant_burst(2, 8, 8, 0.6f);
  auto run = [&](std::uint64_t seed) {
    TaskConfig cfg = tiny_fuse_config();
    cfg.seed = seed;
    Trainer<float> t(seq, cfg);
    std::vector<double> totals;
    for (int i = 0; i < 20; ++i) totals.push_back(t.step().total);
    return totals;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("pre-fit degenerate model barely moves under a zero-weight objective") {
  // constant 0.5 burst; sigmoid scene head with zero parameters outputs 0.5
  // exactly, so recon starts at 0 and Adam has nothing to do
  const auto seq = constant_burst(2, 8, 8, 0.5f);
  TaskConfig cfg = tiny_fuse_config();
  Trainer<float> trainer(seq, cfg);
  for (auto* p : trainer.model().params()) std::fill(p->data.begin(), p->data.end(), 0.0f);
  // identity bias for the homography head
  auto& bias = trainer.model().motion.layers().back().b;
  bias.data[0] = 1.0f;
  bias.data[4] = 1.0f;
  std::vector<float> before;
  for (auto* p : trainer.model().params())
    before.insert(before.end(), p->data.begin(), p->data.end());
  const auto report = trainer.step();
  CHECK(report.recon == doctest::Approx(0.0).epsilon(1e-12));
  std::size_t k = 0;
  for (auto* p : trainer.model().params())
    for (float v : p->data) CHECK(std::fabs(v - before[k++]) < 1e-6);
}

TEST_CASE("fit: iterations must be positive; bad config rejected") {
  const auto seq = constant_burst(2, 8, 8, 0.5f);
  TaskConfig cfg = tiny_fuse_config();
  cfg.iterations = 0;
  CHECK_THROWS_AS((void)nir::fit<float>(seq, cfg), nir::ConfigError);
}

TEST_CASE("fit is deterministic end to end") {
  nir::SynthSpec spec;
  spec.kind = nir::SynthKind::kTranslate;
  spec.height = spec.width = 16;
  spec.frames = 2;
  spec.shift_x_px = 1;
  const auto synth = nir::generate(spec);
  TaskConfig cfg = tiny_fuse_config();
  cfg.iterations = 30;
  auto [m1, log1] = nir::fit<float>(synth.burst, cfg);
  auto [m2, log2] = nir::fit<float>(synth.burst, cfg);
  CHECK(m1.scene.layers()[0].w.data == m2.scene.layers()[0].w.data);
  CHECK(m1.motion.layers().back().b.data == m2.motion.layers().back().b.data);
  CHECK(log1.back().total == log2.back().total);
}

TEST_CASE("trainer state round-trip continues the exact trajectory") {
  namespace fs = std::filesystem;
  const auto seq = constant_burst(2, 8, 8, 0.4f);
  TaskConfig cfg = tiny_fuse_config();

  Trainer<float> straight(seq, cfg);
  for (int i = 0; i < 20; ++i) straight.step();

  Trainer<float> half(seq, cfg);
  for (int i = 0; i < 10; ++i) half.step();
  const auto state = fs::temp_directory_path() / "nir_trainer_state.bin";
  half.save_state(state.string());

  Trainer<float> resumed(seq, cfg);
  resumed.load_state(state.string());
  CHECK(resumed.step_index() == 10);
  for (int i = 0; i < 10; ++i) resumed.step();

  const auto& a = straight.model().scene.layers();
  const auto& b = resumed.model().scene.layers();
  for (std::size_t li = 0; li < a.size(); ++li) {
    CHECK(a[li].w.data == b[li].w.data);
    CHECK(a[li].b.data == b[li].b.data);
  }
  fs::remove(state);
}

TEST_CASE("divergence raises a step-stamped error instead of propagating NaN") {
  const auto seq = constant_burst(2, 8, 8, 0.5f);
  TaskConfig cfg = tiny_fuse_config();
  Trainer<float> trainer(seq, cfg);
  for (int i = 0; i < 3; ++i) trainer.step();
  // poison one weight the way a numeric blowup would
  trainer.model().scene.layers()[0].w.data[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    trainer.step();
    FAIL("expected DivergedError");
  } catch (const nir::DivergedError& e) {
    CHECK(e.step() == 3);
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("rain objective wires interference, tv and w terms") {
  nir::SynthSpec spec;
  spec.kind = nir::SynthKind::kRain;
  spec.height = spec.width = 24;
  spec.frames = 3;
  const auto synth = nir::generate(spec);

  TaskConfig cfg = nir::default_recipe(Task::kRain);
  cfg.scene_net.hidden_layers = cfg.motion_net.hidden_layers = 2;
  cfg.interf_net->hidden_layers = 2;
  cfg.scene_net.hidden_units = cfg.motion_net.hidden_units = 24;
  cfg.interf_net->hidden_units = 24;
  cfg.batch_fraction = 0.25;
  cfg.weights.w = 0.01;  // optional L_w pulls the occlusion dimension to 0
  cfg.iterations = 5;
  Trainer<float> trainer(synth.burst, cfg);
  const auto report = trainer.step();
  CHECK(report.recon > 0);
  CHECK(report.tvflow > 0);
  CHECK(report.interf > 0);
  CHECK(report.w_l1 > 0);
  CHECK(report.total == doctest::Approx(report.recon + 0.02 * report.tvflow +
                                        0.01 * report.interf + 0.01 * report.w_l1)
                            .epsilon(1e-5));
}

TEST_CASE("moire objective wires the exclusion term on a sub-batch") {
  nir::SynthSpec spec;
  spec.kind = nir::SynthKind::kAdditiveInterf;
  spec.height = spec.width = 24;
  spec.frames = 3;
  const auto synth = nir::generate(spec);

  TaskConfig cfg = nir::default_recipe(Task::kMoire);
  cfg.scene_net.hidden_layers = cfg.motion_net.hidden_layers = 2;
  cfg.interf_net->hidden_layers = 2;
  cfg.scene_net.hidden_units = cfg.motion_net.hidden_units = 32;
  cfg.interf_net->hidden_units = 32;
  cfg.excl_subbatch = 16;
  cfg.iterations = 5;
  Trainer<float> trainer(synth.burst, cfg);
  const auto report = trainer.step();
  CHECK(report.recon > 0);
  CHECK(report.excl > 0);
  CHECK(report.interf > 0);
  CHECK(report.tvflow == 0.0);  // homography task has no flow to regularize
}
