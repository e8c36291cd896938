#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nir/adam.hpp"
#include "nir/errors.hpp"
#include "nir/formation.hpp"
#include "nir/imaging.hpp"
#include "nir/losses.hpp"
#include "nir/mlp.hpp"
#include "nir/motion.hpp"
#include "nir/random.hpp"
#include "nir/tape.hpp"

namespace nir {

enum class Task { kMoire, kReflection, kFence, kRain, kDenoise, kFuse, kSrDemosaic };

inline Task parse_task(const std::string& s) {
  if (s == "moire") return Task::kMoire;
  if (s == "reflection") return Task::kReflection;
  if (s == "fence") return Task::kFence;
  if (s == "rain") return Task::kRain;
  if (s == "denoise") return Task::kDenoise;
  if (s == "fuse") return Task::kFuse;
  if (s == "sr_demosaic") return Task::kSrDemosaic;
  throw ConfigError("unknown task: " + s);
}

inline const char* task_name(Task t) {
  switch (t) {
    case Task::kMoire: return "moire";
    case Task::kReflection: return "reflection";
    case Task::kFence: return "fence";
    case Task::kRain: return "rain";
    case Task::kDenoise: return "denoise";
    case Task::kFuse: return "fuse";
    case Task::kSrDemosaic: return "sr_demosaic";
  }
  return "?";
}

enum class Precision { kF32, kF64 };

// Declarative recipe for one fitting job.
struct TaskConfig {
  Task task = Task::kFuse;
  MotionKind motion = MotionKind::kHomography;
  FormationKind formation = FormationKind::kSceneOnly;
  Normalization normalization = Normalization::kUnit;
  MlpConfig scene_net;
  MlpConfig motion_net;
  std::optional<MlpConfig> interf_net;
  LossWeights weights;
  std::size_t iterations = 3000;
  double batch_fraction = 0.25;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF32;
  bool projective = true;  // homography perspective divide
  // The exclusion term is estimated on this many samples of each batch;
  // its stencil triples the stream evaluations, so it runs on a sub-batch.
  std::size_t excl_subbatch = 128;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  std::optional<CfaLoad> cfa;

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(batch_fraction > 0) || batch_fraction > 1)
      throw ConfigError("batch_fraction must be in (0, 1]");
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    weights.validate();
    scene_net.validate();
    motion_net.validate();
    if (interf_net) interf_net->validate();
  }
};

namespace detail {

inline MlpConfig siren(std::size_t in, std::size_t out, std::size_t layers, std::size_t units,
                       OutputHead head) {
  MlpConfig c;
  c.in_dim = in;
  c.out_dim = out;
  c.hidden_layers = layers;
  c.hidden_units = units;
  c.activation = Activation::kSine;
  c.output_head = head;
  return c;
}

inline MlpConfig relu_net(std::size_t in, std::size_t out, std::size_t layers, std::size_t units) {
  MlpConfig c;
  c.in_dim = in;
  c.out_dim = out;
  c.hidden_layers = layers;
  c.hidden_units = units;
  c.activation = Activation::kRelu;
  c.output_head = OutputHead::kLinear;
  return c;
}

}  // namespace detail

// Motion-net template per transform family. The homography net maps t to
// the eight matrix parameters and starts at the identity transform.
inline MlpConfig motion_net_template(MotionKind kind, std::size_t layers, std::size_t units,
                                     Activation act) {
  MlpConfig c;
  c.activation = act;
  c.hidden_layers = layers;
  c.hidden_units = units;
  if (kind == MotionKind::kHomography) {
    c.in_dim = 1;
    c.out_dim = 8;
    c.identity_bias = true;
    c.output_head = OutputHead::kLinear;
  } else {
    c.in_dim = 3;
    c.out_dim = kind == MotionKind::kFlowW ? 3 : 2;
    c.output_head = OutputHead::kLinear;
  }
  return c;
}

// Fully populated per-task defaults. occlusion_aware switches the flow
// tasks that support it onto the w-augmented transform.
inline TaskConfig default_recipe(Task task, bool occlusion_aware = false) {
  using detail::relu_net;
  using detail::siren;
  TaskConfig c;
  c.task = task;
  switch (task) {
    case Task::kMoire:
      c.motion = MotionKind::kHomography;
      c.formation = FormationKind::kAdditive;
      c.normalization = Normalization::kSigned;
      c.motion_net = motion_net_template(c.motion, 2, 256, Activation::kRelu);
      c.scene_net = siren(2, 3, 4, 256, OutputHead::kTanhSigned);
      c.interf_net = siren(3, 3, 4, 128, OutputHead::kTanhSigned);
      c.weights.interf = 0.001;
      c.weights.excl = 0.002;
      c.iterations = 3000;
      c.batch_fraction = 0.25;
      break;
    case Task::kReflection:
      c.motion = MotionKind::kFlow;
      c.formation = FormationKind::kAdditive;
      c.normalization = Normalization::kUnit;
      c.motion_net = motion_net_template(c.motion, 4, 256, Activation::kSine);
      c.scene_net = siren(2, 3, 4, 256, OutputHead::kSigmoidUnit);
      c.interf_net = siren(3, 3, 4, 256, OutputHead::kSigmoidUnit);
      c.weights.interf = 0.1;
      c.weights.tvflow = 0.02;
      c.weights.excl = 0.001;
      c.iterations = 5000;
      c.batch_fraction = 1.0 / 32.0;
      break;
    case Task::kFence:
      c.motion = occlusion_aware ? MotionKind::kFlowW : MotionKind::kFlow;
      c.formation = FormationKind::kFenceAlpha;
      c.normalization = Normalization::kUnit;
      c.motion_net = motion_net_template(c.motion, 4, 256, Activation::kSine);
      c.scene_net = siren(occlusion_aware ? 3 : 2, 3, 4, 256, OutputHead::kSigmoidUnit);
      c.interf_net = siren(3, 4, 4, 256, OutputHead::kSigmoidUnit);  // (color, alpha)
      c.weights.interf = 0.1;
      c.weights.tvflow = 0.02;
      c.iterations = 5000;
      c.batch_fraction = 1.0 / 32.0;
      break;
    case Task::kRain:
      c.motion = MotionKind::kFlowW;
      c.formation = FormationKind::kRainAchromatic;
      c.normalization = Normalization::kUnit;
      c.motion_net = motion_net_template(c.motion, 5, 256, Activation::kSine);
      c.scene_net = siren(3, 3, 5, 256, OutputHead::kSigmoidUnit);
      c.interf_net = siren(3, 1, 5, 256, OutputHead::kSigmoidUnit);
      c.weights.interf = 0.01;
      c.weights.tvflow = 0.02;
      c.iterations = 5000;
      c.batch_fraction = 1.0 / 32.0;
      break;
    case Task::kDenoise:
      // flow-based scene stream with the moire objective; signed streams so
      // the interference layer can hold zero-mean noise
      c.motion = MotionKind::kFlow;
      c.formation = FormationKind::kAdditive;
      c.normalization = Normalization::kSigned;
      c.motion_net = motion_net_template(c.motion, 4, 256, Activation::kSine);
      c.scene_net = siren(2, 3, 4, 256, OutputHead::kTanhSigned);
      c.interf_net = siren(3, 3, 4, 128, OutputHead::kTanhSigned);
      c.weights.interf = 0.001;
      c.weights.excl = 0.002;
      c.weights.tvflow = 0.02;
      c.iterations = 3000;
      c.batch_fraction = 0.25;
      break;
    case Task::kFuse:
      c.motion = occlusion_aware ? MotionKind::kFlowW : MotionKind::kHomography;
      c.formation = FormationKind::kSceneOnly;
      c.normalization = Normalization::kUnit;
      c.motion_net = c.motion == MotionKind::kHomography
                         ? motion_net_template(c.motion, 2, 256, Activation::kRelu)
                         : motion_net_template(c.motion, 4, 256, Activation::kSine);
      c.scene_net = siren(c.motion == MotionKind::kFlowW ? 3 : 2, 3, 4, 192,
                          OutputHead::kSigmoidUnit);
      if (c.motion != MotionKind::kHomography) c.weights.tvflow = 0.02;
      c.iterations = 3000;
      c.batch_fraction = 0.25;
      break;
    case Task::kSrDemosaic:
      c.motion = MotionKind::kFlow;
      c.formation = FormationKind::kBayerMasked;
      c.normalization = Normalization::kUnit;
      c.motion_net = motion_net_template(c.motion, 4, 256, Activation::kSine);
      c.scene_net = siren(2, 3, 4, 256, OutputHead::kSigmoidUnit);
      c.weights.tvflow = 0.02;
      c.iterations = 3000;
      c.batch_fraction = 0.125;
      break;
  }
  return c;
}

// Applies a motion override to a recipe, fixing the dependent network
// dimensions.
inline void set_motion_kind(TaskConfig& c, MotionKind kind) {
  if (c.motion == kind) return;
  const auto act = kind == MotionKind::kHomography ? Activation::kRelu : Activation::kSine;
  const auto layers = kind == MotionKind::kHomography ? 2 : c.motion_net.hidden_layers;
  c.motion_net = motion_net_template(kind, layers, c.motion_net.hidden_units, act);
  c.scene_net.in_dim = kind == MotionKind::kFlowW ? 3 : 2;
  if (kind == MotionKind::kHomography) c.weights.tvflow = 0;
  else if (c.weights.tvflow == 0) c.weights.tvflow = 0.02;
  c.motion = kind;
}

// Scene + motion + optional interference networks and the burst geometry
// they were fitted to.
template <typename T>
struct SeparationModel {
  TaskConfig config;
  Mlp<T> scene;
  Mlp<T> motion;
  std::optional<Mlp<T>> interf;
  std::size_t burst_h = 0, burst_w = 0, burst_t = 0, burst_c = 0;
  FdSteps steps;

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out;
    for (auto* p : scene.params()) out.push_back(p);
    for (auto* p : motion.params()) out.push_back(p);
    if (interf)
      for (auto* p : interf->params()) out.push_back(p);
    return out;
  }

  double t_norm(std::size_t frame) const {
    return -1.0 + 2.0 * static_cast<double>(frame) / static_cast<double>(burst_t - 1);
  }
};

// Uniform pixel samples with replacement across all frames jointly.
template <typename T>
struct CoordinateBatch {
  Tensor<T> coords;   // {B,3} normalized (x,y,t)
  Tensor<T> targets;  // {B,C}
  std::vector<std::uint32_t> frame_of_row;
  std::vector<std::pair<std::int64_t, std::int64_t>> pixel_pos;  // (row, col)
};

template <typename T>
CoordinateBatch<T> sample_batch(const BurstSequence& seq, double fraction, Rng& rng) {
  if (seq.frames.empty()) throw IngestError("sample_batch: empty sequence");
  if (!(fraction > 0) || fraction > 1) throw ConfigError("batch fraction must be in (0, 1]");
  const std::size_t h = seq.height(), w = seq.width(), t = seq.frame_count();
  const std::size_t c = seq.channels();
  const auto b = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(h) * static_cast<double>(w)));
  const bool raw = seq.cfa.has_value();
  CoordinateBatch<T> batch;
  batch.coords = Tensor<T>({b, 3});
  batch.targets = Tensor<T>({b, raw ? 3 : c});
  batch.frame_of_row.resize(b);
  batch.pixel_pos.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto fi = static_cast<std::size_t>(rng.uniform_index(t));
    const auto row = static_cast<std::size_t>(rng.uniform_index(h));
    const auto col = static_cast<std::size_t>(rng.uniform_index(w));
    batch.coords.at(i, 0) = static_cast<T>(coord_x(col, w));
    batch.coords.at(i, 1) = static_cast<T>(coord_y(row, h));
    batch.coords.at(i, 2) = static_cast<T>(seq.t_norm(fi));
    batch.frame_of_row[i] = static_cast<std::uint32_t>(fi);
    batch.pixel_pos[i] = {static_cast<std::int64_t>(row), static_cast<std::int64_t>(col)};
    if (raw) {
      const int ch = cfa_channel_at(*seq.cfa, batch.pixel_pos[i].first, batch.pixel_pos[i].second);
      for (std::size_t k = 0; k < 3; ++k) batch.targets.at(i, k) = T(0);
      batch.targets.at(i, static_cast<std::size_t>(ch)) =
          static_cast<T>(seq.frames[fi].at(row, col, 0));
    } else {
      for (std::size_t k = 0; k < c; ++k)
        batch.targets.at(i, k) = static_cast<T>(seq.frames[fi].at(row, col, k));
    }
  }
  return batch;
}

// One fitting job: sampling, forward through motion + streams + formation,
// task losses, backward, Adam. Single logical thread; rebuilt tape per step.
template <typename T>
class Trainer {
 public:
  Trainer(const BurstSequence& seq, const TaskConfig& cfg) : seq_(seq), rng_(cfg.seed) {
    cfg.validate();
    seq.validate();
    model_.config = cfg;
    model_.burst_h = seq.height();
    model_.burst_w = seq.width();
    model_.burst_t = seq.frame_count();
    model_.burst_c = seq.channels();
    model_.steps = FdSteps::for_burst(seq.height(), seq.width(), seq.frame_count());
    model_.scene = Mlp<T>(cfg.scene_net, rng_);
    model_.motion = Mlp<T>(cfg.motion_net, rng_);
    if (cfg.interf_net) model_.interf = Mlp<T>(*cfg.interf_net, rng_);
    AdamConfig ac;
    ac.lr = cfg.lr;
    adam_.emplace(model_.params(), ac);
    unique_t_ = Tensor<T>({seq.frame_count(), 1});
    for (std::size_t i = 0; i < seq.frame_count(); ++i)
      unique_t_.data[i] = static_cast<T>(seq.t_norm(i));
  }

  SeparationModel<T>& model() { return model_; }
  const SeparationModel<T>& model() const { return model_; }
  std::uint64_t step_index() const { return step_; }
  Rng& rng() { return rng_; }

  // One forward/backward/Adam cycle. Throws DivergedError on a non-finite
  // loss, before any parameter update.
  LossReport step() {
    const auto t0 = std::chrono::steady_clock::now();
    CoordinateBatch<T> batch = sample_batch<T>(seq_, model_.config.batch_fraction, rng_);
    LossReport report;
    try {
      report = run_tape(batch);
    } catch (const NumericError& e) {
      throw DivergedError(std::string("non-finite value during training: ") + e.what(), step_);
    } catch (const NearSingularError& e) {
      throw DivergedError(std::string("motion collapsed to a singular transform: ") + e.what(),
                          step_);
    }
    if (!std::isfinite(report.total))
      throw DivergedError("loss became non-finite", step_);
    adam_->step();
    ++step_;
    report.step = step_;
    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
  }

  // ---- full-state checkpointing (networks + Adam moments + RNG) ----

  void save_state(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open trainer state for writing: " + path);
    os.write("NIRS", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(step_));
    const std::string rs = rng_.serialize();
    detail::put_u32(os, static_cast<std::uint32_t>(rs.size()));
    os.write(rs.data(), static_cast<std::streamsize>(rs.size()));
    auto dump = [&](const std::vector<std::vector<T>>& mm) {
      for (const auto& v : mm) {
        detail::put_u32(os, static_cast<std::uint32_t>(v.size()));
        for (T x : v) detail::put_f32(os, static_cast<float>(x));
      }
    };
    auto& self = const_cast<Trainer&>(*this);
    dump(self.adam_->moments_m());
    dump(self.adam_->moments_v());
    for (auto* p : self.model_.params()) {
      detail::put_u32(os, static_cast<std::uint32_t>(p->numel()));
      for (T x : p->data) detail::put_f32(os, static_cast<float>(x));
    }
    if (!os) throw IoError("trainer state write failed: " + path);
  }

  void load_state(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open trainer state: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NIRS", 4) != 0) throw IoError("bad trainer state magic: " + path);
    if (detail::get_u32(is) != 1) throw IoError("unsupported trainer state version: " + path);
    step_ = detail::get_u32(is);
    const std::uint32_t rn = detail::get_u32(is);
    std::string rs(rn, '\0');
    is.read(rs.data(), rn);
    rng_.deserialize(rs);
    auto slurp = [&](std::vector<std::vector<T>>& mm) {
      for (auto& v : mm) {
        if (detail::get_u32(is) != v.size()) throw IoError("trainer state shape mismatch: " + path);
        for (T& x : v) x = static_cast<T>(detail::get_f32(is));
      }
    };
    slurp(adam_->moments_m());
    slurp(adam_->moments_v());
    adam_->set_step_count(step_);
    for (auto* p : model_.params()) {
      if (detail::get_u32(is) != p->numel()) throw IoError("trainer state shape mismatch: " + path);
      for (T& x : p->data) x = static_cast<T>(detail::get_f32(is));
    }
    if (!is) throw IoError("trainer state truncated: " + path);
  }

 private:
  LossReport run_tape(const CoordinateBatch<T>& batch) {
    const TaskConfig& cfg = model_.config;
    const std::size_t b = batch.coords.shape[0];
    const bool has_interf = model_.interf.has_value();
    const bool need_excl = cfg.weights.excl > 0 && has_interf;
    const bool need_tv = cfg.weights.tvflow > 0 && cfg.motion != MotionKind::kHomography;
    const bool need_w = cfg.weights.w > 0 && cfg.motion == MotionKind::kFlowW;
    const std::size_t s = need_excl ? std::min(cfg.excl_subbatch, b) : 0;

    // Row layout: [base b | excl +hx s | excl +hy s | tv +hx b | tv +hy b | tv +ht b]
    const std::size_t stream_rows = b + 2 * s;
    const std::size_t total_rows = stream_rows + (need_tv ? 3 * b : 0);
    Tensor<T> all({total_rows, 3});
    std::vector<std::uint32_t> frame_all(stream_rows);
    auto copy_row = [&](std::size_t dst, std::size_t src, double ddx, double ddy, double ddt) {
      all.at(dst, 0) = batch.coords.at(src, 0) + static_cast<T>(ddx);
      all.at(dst, 1) = batch.coords.at(src, 1) + static_cast<T>(ddy);
      all.at(dst, 2) = batch.coords.at(src, 2) + static_cast<T>(ddt);
    };
    for (std::size_t i = 0; i < b; ++i) {
      copy_row(i, i, 0, 0, 0);
      frame_all[i] = batch.frame_of_row[i];
    }
    for (std::size_t i = 0; i < s; ++i) {
      copy_row(b + i, i, model_.steps.hx, 0, 0);
      copy_row(b + s + i, i, 0, model_.steps.hy, 0);
      frame_all[b + i] = batch.frame_of_row[i];
      frame_all[b + s + i] = batch.frame_of_row[i];
    }
    if (need_tv) {
      for (std::size_t i = 0; i < b; ++i) {
        copy_row(stream_rows + i, i, model_.steps.hx, 0, 0);
        copy_row(stream_rows + b + i, i, 0, model_.steps.hy, 0);
        copy_row(stream_rows + 2 * b + i, i, 0, 0, model_.steps.ht);
      }
    }

    tape_.clear();
    Tape<T>& tape = tape_;
    auto coords_all = tape.constant(std::move(all));
    auto stream_coords = total_rows == stream_rows ? coords_all : tape.rows(coords_all, 0, stream_rows);

    // motion transform over the stream region (and tv region for flow nets)
    typename Tape<T>::Id canon{};
    typename Tape<T>::Id g_out{};  // flow output over all rows
    if (cfg.motion == MotionKind::kHomography) {
      auto h_frames = model_.motion.forward(tape, tape.constant(unique_t_));
      auto h_rows = tape.gather_rows(h_frames, frame_all);
      canon = detail::homography_coords(tape, stream_coords, h_rows, cfg.projective);
    } else {
      g_out = model_.motion.forward(tape, coords_all);
      auto g_stream = total_rows == stream_rows ? g_out : tape.rows(g_out, 0, stream_rows);
      canon = detail::flow_coords(tape, stream_coords, g_stream,
                                  cfg.motion == MotionKind::kFlowW);
    }

    auto scene_all = model_.scene.forward(tape, canon);
    auto scene_base = s > 0 ? tape.rows(scene_all, 0, b) : scene_all;

    std::optional<typename Tape<T>::Id> interf_all, interf_base, alpha_base, interf_for_loss;
    if (has_interf) {
      interf_all = model_.interf->forward(tape, stream_coords);
      interf_base = s > 0 ? tape.rows(*interf_all, 0, b) : *interf_all;
      if (cfg.formation == FormationKind::kFenceAlpha) {
        alpha_base = tape.cols(*interf_base, 3, 4);
        interf_for_loss = tape.cols(*interf_base, 0, 3);
      } else {
        interf_for_loss = interf_base;
      }
    }

    auto pred = [&] {
      switch (cfg.formation) {
        case FormationKind::kFenceAlpha:
          return compose(tape, cfg.formation, scene_base, interf_for_loss, alpha_base);
        case FormationKind::kAdditive:
        case FormationKind::kRainAchromatic:
          return compose(tape, cfg.formation, scene_base, interf_base);
        default:
          return compose(tape, cfg.formation, scene_base);
      }
    }();
    if (cfg.formation == FormationKind::kBayerMasked) {
      if (!cfg.cfa) throw ConfigError("bayer_masked formation requires a CFA pattern");
      pred = bayer_mask(tape, pred, cfg.cfa->pattern, batch.pixel_pos);
    }

    LossTerms<T> terms;
    terms.recon = recon_loss(tape, pred, tape.constant(batch.targets));
    if (has_interf && cfg.weights.interf > 0)
      terms.interf = interference_loss(tape, *interf_for_loss);
    if (need_tv) {
      auto g_base = tape.rows(g_out, 0, b);
      auto g_dx = tape.rows(g_out, stream_rows, stream_rows + b);
      auto g_dy = tape.rows(g_out, stream_rows + b, stream_rows + 2 * b);
      auto g_dt = tape.rows(g_out, stream_rows + 2 * b, stream_rows + 3 * b);
      terms.tvflow = tv_flow_from_diffs(tape, g_base, g_dx, g_dy, g_dt, model_.steps);
    }
    if (need_excl) {
      auto scene_sub = tape.rows(scene_all, 0, s);
      auto scene_jx = fd_column(tape, scene_sub, tape.rows(scene_all, b, b + s), model_.steps.hx);
      auto scene_jy =
          fd_column(tape, scene_sub, tape.rows(scene_all, b + s, b + 2 * s), model_.steps.hy);
      auto interf_sub = tape.rows(*interf_all, 0, s);
      auto interf_jx =
          fd_column(tape, interf_sub, tape.rows(*interf_all, b, b + s), model_.steps.hx);
      auto interf_jy =
          fd_column(tape, interf_sub, tape.rows(*interf_all, b + s, b + 2 * s), model_.steps.hy);
      terms.excl = exclusion_loss(tape, tape.hcat2(scene_jx, scene_jy),
                                  tape.hcat2(interf_jx, interf_jy));
    }
    if (need_w) terms.w_l1 = w_l1_loss(tape, tape.cols(tape.rows(g_out, 0, b), 2, 3));

    LossReport report;
    auto total = total_loss(tape, terms, cfg.weights, report);
    if (!std::isfinite(report.total)) return report;  // caller raises DivergedError
    adam_->zero_grad();
    tape.backward(total);
    return report;
  }

  const BurstSequence& seq_;
  Tape<T> tape_;
  Rng rng_;
  SeparationModel<T> model_;
  std::optional<Adam<T>> adam_;
  Tensor<T> unique_t_;
  std::uint64_t step_ = 0;
};

struct FitOptions {
  std::string checkpoint_dir;  // empty = no checkpoints
  std::function<void(const LossReport&)> on_step;
};

template <typename T>
void save_model_checkpoint(const SeparationModel<T>& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_checkpoint(model.scene, (fs::path(dir) / "scene.nirw").string());
  save_checkpoint(model.motion, (fs::path(dir) / "motion.nirw").string());
  if (model.interf) save_checkpoint(*model.interf, (fs::path(dir) / "interf.nirw").string());
}

// Runs the configured number of iterations. On divergence the last good
// checkpoint is (re)written before the error propagates.
template <typename T>
std::pair<SeparationModel<T>, std::vector<LossReport>> fit(const BurstSequence& seq,
                                                           const TaskConfig& cfg,
                                                           const FitOptions& opts = {}) {
  Trainer<T> trainer(seq, cfg);
  std::vector<LossReport> log;
  log.reserve(cfg.iterations);
  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    try {
      log.push_back(trainer.step());
    } catch (const DivergedError&) {
      if (!opts.checkpoint_dir.empty()) save_model_checkpoint(trainer.model(), opts.checkpoint_dir);
      throw;
    }
    if (opts.on_step) opts.on_step(log.back());
    if (!opts.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (i + 1) % cfg.checkpoint_every == 0)
      save_model_checkpoint(trainer.model(), opts.checkpoint_dir);
  }
  if (!opts.checkpoint_dir.empty()) save_model_checkpoint(trainer.model(), opts.checkpoint_dir);
  return {std::move(trainer.model()), std::move(log)};
}

}  // namespace nir
