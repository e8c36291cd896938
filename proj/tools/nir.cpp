// Batch command-line surface: fit/separate/fuse/render/synth/metrics plus
// the gradient verification suite. One process runs one fitting job unless
// --jobs fans out over independent sequences.

#include <CLI11.hpp>

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>
#include <vector>

#include "nir/config.hpp"
#include "nir/gradcheck.hpp"
#include "nir/metrics.hpp"
#include "nir/render.hpp"
#include "nir/synth.hpp"
#include "nir/trainer.hpp"

namespace fs = std::filesystem;
using namespace nir;

namespace {

struct FitFlags {
  std::string input, output, config_file;
  std::string task = "moire";
  std::string motion;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
  double batch_fraction = 0;
  double lr = 0;
  bool occlusion_aware = false;
  std::uint64_t checkpoint_every = 0;
  std::string cfa;
  double cfa_black = 0;
  double cfa_white = 65535;
  unsigned jobs = 1;
};

void add_common_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--input", f.input, "burst directory (or directory of bursts with --jobs)")
      ->required();
  cmd->add_option("--output", f.output, "output directory")->required();
  cmd->add_option("--config", f.config_file, "flat key=value config file (a manifest reloads)");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--iterations", f.iterations, "training iterations");
  cmd->add_option("--batch-fraction", f.batch_fraction, "batch size as a fraction of H*W");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--checkpoint-every", f.checkpoint_every, "checkpoint cadence in steps");
  cmd->add_option("--jobs", f.jobs, "independent sequences fitted concurrently")
      ->check(CLI::Range(1u, 64u));
}

// Precedence: task recipe defaults < config file < explicit flags.
TaskConfig resolve_config(const CLI::App* cmd, const FitFlags& f, Task task) {
  TaskConfig cfg = default_recipe(task, f.occlusion_aware);
  if (!f.config_file.empty()) cfg = config_from_kv(parse_kv_file(f.config_file), cfg);
  if (cmd->count("--motion")) set_motion_kind(cfg, detail::parse_motion(f.motion));
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (cmd->count("--iterations")) cfg.iterations = f.iterations;
  if (cmd->count("--batch-fraction")) cfg.batch_fraction = f.batch_fraction;
  if (cmd->count("--lr")) cfg.lr = f.lr;
  if (cmd->count("--checkpoint-every")) cfg.checkpoint_every = f.checkpoint_every;
  if (!f.cfa.empty()) {
    CfaLoad cfa;
    cfa.pattern = parse_cfa(f.cfa);
    cfa.black_level = f.cfa_black;
    cfa.white_level = f.cfa_white;
    cfg.cfa = cfa;
  }
  cfg.validate();
  return cfg;
}

void write_log(const std::vector<LossReport>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write training log: " + path);
  char line[320];
  for (const LossReport& r : log) {
    std::snprintf(line, sizeof(line),
                  "{\"step\":%" PRIu64
                  ",\"total\":%.9g,\"recon\":%.9g,\"interf\":%.9g,\"tvflow\":%.9g,"
                  "\"excl\":%.9g,\"w_l1\":%.9g,\"wall_ms\":%.3f}",
                  r.step, r.total, r.recon, r.interf, r.tvflow, r.excl, r.w_l1, r.wall_ms);
    os << line << "\n";
  }
}

std::vector<std::pair<std::string, std::string>> final_loss_results(
    const std::vector<LossReport>& log) {
  std::vector<std::pair<std::string, std::string>> out;
  if (log.empty()) return out;
  const LossReport& r = log.back();
  out.emplace_back("steps", std::to_string(r.step));
  out.emplace_back("final.total", detail::fmt_double(r.total));
  out.emplace_back("final.recon", detail::fmt_double(r.recon));
  out.emplace_back("final.interf", detail::fmt_double(r.interf));
  out.emplace_back("final.tvflow", detail::fmt_double(r.tvflow));
  out.emplace_back("final.excl", detail::fmt_double(r.excl));
  out.emplace_back("final.w_l1", detail::fmt_double(r.w_l1));
  return out;
}

// Canonical render over the union footprint (or an explicit window),
// scaled so canonical units keep the burst's pixel pitch times S.
template <typename T>
void write_canonical(const SeparationModel<T>& model, const Window& win, double scale,
                     const std::string& path) {
  const auto out_w = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(model.burst_w) * (win.x1 - win.x0) / 2.0 * scale)));
  const auto out_h = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(model.burst_h) * (win.y1 - win.y0) / 2.0 * scale)));
  const Image canon = render_canonical(model, win, out_h, out_w);
  save_image(canon, path, model.config.normalization);
}

template <typename T>
void run_separate_one(const TaskConfig& cfg, const std::string& input, const std::string& output) {
  const BurstSequence seq = load_burst(input, cfg.normalization,
                                       cfg.cfa ? std::optional<CfaLoad>(*cfg.cfa) : std::nullopt);
  fs::create_directories(output);
  FitOptions opts;
  opts.checkpoint_dir = output;
  auto [model, log] = fit<T>(seq, cfg, opts);

  char name[64];
  for (std::size_t f = 0; f < seq.frame_count(); ++f) {
    const double t = model.t_norm(f);
    std::snprintf(name, sizeof(name), "frame_%03zu_scene.png", f);
    save_image(render_frame(model, t, seq.height(), seq.width(), Stream::kScene),
               (fs::path(output) / name).string(), stream_normalization(model, Stream::kScene));
    if (model.interf) {
      std::snprintf(name, sizeof(name), "frame_%03zu_interf.png", f);
      save_image(render_frame(model, t, seq.height(), seq.width(), Stream::kInterference),
                 (fs::path(output) / name).string(),
                 stream_normalization(model, Stream::kInterference));
      if (cfg.formation == FormationKind::kFenceAlpha ||
          cfg.formation == FormationKind::kRainAchromatic) {
        std::snprintf(name, sizeof(name), "frame_%03zu_alpha.png", f);
        save_image(render_frame(model, t, seq.height(), seq.width(), Stream::kAlpha),
                   (fs::path(output) / name).string(), Normalization::kUnit);
      }
    }
  }
  write_canonical(model, canonical_window(model), 1.0, (fs::path(output) / "view_canon.png").string());
  write_log(log, (fs::path(output) / "log.jsonl").string());

  RunManifest manifest;
  manifest.command = "separate";
  manifest.input = input;
  manifest.output = output;
  manifest.config = cfg;
  manifest.info = {{"input.frames", std::to_string(seq.frame_count())},
                   {"input.height", std::to_string(seq.height())},
                   {"input.width", std::to_string(seq.width())},
                   {"input.channels", std::to_string(seq.channels())}};
  manifest.results = final_loss_results(log);
  write_manifest(manifest, (fs::path(output) / "manifest.txt").string());
}

// Directory of bursts -> independent jobs with per-job seeds seed+index.
std::vector<std::string> burst_jobs(const std::string& input) {
  bool has_png = false;
  std::vector<std::string> subdirs;
  if (!fs::is_directory(input)) throw IngestError("not a directory: " + input);
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && e.path().extension() == ".png") has_png = true;
    if (e.is_directory()) subdirs.push_back(e.path().string());
  }
  if (has_png || subdirs.empty()) return {};
  std::sort(subdirs.begin(), subdirs.end());
  return subdirs;
}

template <typename F>
void run_jobs(const std::vector<std::string>& jobs, unsigned width, F&& body) {
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs.size());
  const unsigned n = std::min<unsigned>(width, jobs.size());
  for (unsigned w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int cmd_separate(const CLI::App* cmd, FitFlags& f) {
  const Task task = parse_task(f.task);
  if (task == Task::kFuse || task == Task::kSrDemosaic)
    throw ConfigError("use the fuse subcommand for fusion tasks");
  TaskConfig cfg = resolve_config(cmd, f, task);

  const auto jobs = burst_jobs(f.input);
  if (jobs.empty()) {
    run_separate_one<float>(cfg, f.input, f.output);
  } else {
    run_jobs(jobs, f.jobs, [&](std::size_t i) {
      TaskConfig job_cfg = cfg;
      job_cfg.seed = cfg.seed + i;
      run_separate_one<float>(job_cfg, jobs[i],
                              (fs::path(f.output) / fs::path(jobs[i]).filename()).string());
    });
  }
  return 0;
}

int cmd_fuse(const CLI::App* cmd, FitFlags& f, const std::vector<double>& window, double scale) {
  const Task task = f.cfa.empty() ? Task::kFuse : Task::kSrDemosaic;
  f.task = task_name(task);
  TaskConfig cfg = resolve_config(cmd, f, task);

  if (cfg.cfa) {
    // raw mode requires 16-bit grayscale frames; a color burst is a
    // configuration mismatch, not an ingest failure
    for (const auto& e : fs::directory_iterator(f.input)) {
      if (!e.is_regular_file() || e.path().extension() != ".png") continue;
      const auto probe = probe_png(e.path().string());
      if (probe.bit_depth != 16 || !probe.grayscale)
        throw ConfigError("--cfa given but " + e.path().filename().string() +
                          " is not a 16-bit raw mosaic");
      break;
    }
  }

  const BurstSequence seq = load_burst(f.input, cfg.normalization,
                                       cfg.cfa ? std::optional<CfaLoad>(*cfg.cfa) : std::nullopt);
  fs::create_directories(f.output);
  FitOptions opts;
  opts.checkpoint_dir = f.output;
  auto [model, log] = fit<float>(seq, cfg, opts);

  Window win = canonical_window(model);
  if (!window.empty()) {
    if (window.size() != 4) throw ConfigError("--window needs x0 y0 x1 y1");
    win = Window{window[0], window[1], window[2], window[3]};
    if (win.empty()) throw ConfigError("--window is empty");
  }
  write_canonical(model, win, scale, (fs::path(f.output) / "view_canon.png").string());
  write_log(log, (fs::path(f.output) / "log.jsonl").string());

  RunManifest manifest;
  manifest.command = "fuse";
  manifest.input = f.input;
  manifest.output = f.output;
  manifest.config = cfg;
  manifest.info = {{"input.frames", std::to_string(seq.frame_count())},
                   {"input.height", std::to_string(seq.height())},
                   {"input.width", std::to_string(seq.width())},
                   {"input.channels", std::to_string(seq.channels())}};
  manifest.results = final_loss_results(log);
  manifest.results.emplace_back("window", detail::fmt_double(win.x0) + " " +
                                              detail::fmt_double(win.y0) + " " +
                                              detail::fmt_double(win.x1) + " " +
                                              detail::fmt_double(win.y1));
  manifest.results.emplace_back("scale", detail::fmt_double(scale));
  write_manifest(manifest, (fs::path(f.output) / "manifest.txt").string());
  return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out) {
  const SynthResult result = generate(spec);
  write_synth(result, out);
  std::ofstream os(fs::path(out) / "synth.txt");
  os << "kind = " << synth_kind_name(spec.kind) << "\n";
  os << "frames = " << spec.frames << "\n";
  os << "height = " << spec.height << "\n";
  os << "width = " << spec.width << "\n";
  os << "seed = " << spec.seed << "\n";
  return 0;
}

int cmd_metrics(const std::string& ref_dir, const std::string& test_dir, const std::string& out) {
  auto list_pngs = [](const std::string& dir) {
    if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png")
        names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
  };
  const auto ref_names = list_pngs(ref_dir);
  const auto test_names = list_pngs(test_dir);
  std::vector<std::string> common;
  std::set_intersection(ref_names.begin(), ref_names.end(), test_names.begin(), test_names.end(),
                        std::back_inserter(common));
  if (common.empty()) throw IngestError("no matching PNG filenames between directories");

  auto load = [](const fs::path& p) {
    const RawImage8 raw = read_png_rgb8(p.string());
    Image img(raw.height, raw.width, 3);
    for (std::size_t i = 0; i < raw.rgb.size(); ++i)
      img.data[i] = normalize_u8(raw.rgb[i], Normalization::kUnit);
    return img;
  };

  std::ofstream ofs;
  if (!out.empty()) {
    ofs.open(out);
    if (!ofs) throw IoError("cannot write metrics file: " + out);
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << "\n";
    if (ofs) ofs << line << "\n";
  };
  char line[256];
  double mp = 0, ms = 0, mn = 0, mi = 0;
  for (const auto& name : common) {
    const MetricReport r = compare_images(load(fs::path(ref_dir) / name), load(fs::path(test_dir) / name));
    std::snprintf(line, sizeof(line), "pair=%s psnr=%.6g ssim=%.6f ncc=%.6f si=%.6f", name.c_str(),
                  r.psnr, r.ssim, r.ncc, r.si);
    emit(line);
    mp += r.psnr;
    ms += r.ssim;
    mn += r.ncc;
    mi += r.si;
  }
  const double n = static_cast<double>(common.size());
  std::snprintf(line, sizeof(line), "mean psnr=%.6g ssim=%.6f ncc=%.6f si=%.6f", mp / n, ms / n,
                mn / n, mi / n);
  emit(line);
  return 0;
}

int cmd_gradcheck(bool extensive) {
  const GradCheckResult res = run_gradcheck(extensive);
  for (const auto& msg : res.messages) std::cerr << "FAIL " << msg << "\n";
  std::printf("gradcheck: %d probes, %d failures, max rel err %.3g\n", res.probes, res.failures,
              res.max_rel_err);
  return res.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nir - burst fusion and layer separation with coordinate-network image models"};
  app.require_subcommand(1);

  FitFlags sep;
  auto* separate = app.add_subcommand("separate", "fit a two-stream model and write layers");
  separate->add_option("--task", sep.task, "moire|reflection|fence|rain|denoise")->required();
  separate->add_flag("--occlusion-aware", sep.occlusion_aware,
                     "use the w-augmented flow where the task supports it");
  separate->add_option("--motion", sep.motion, "override motion model: homography|flow|flow-w");
  add_common_fit_flags(separate, sep);

  FitFlags fus;
  std::vector<double> fuse_window;
  double fuse_scale = 1.0;
  auto* fuse = app.add_subcommand("fuse", "fuse a burst into a canonical view");
  fuse->add_option("--motion", fus.motion, "homography|flow|flow-w");
  fuse->add_option("--window", fuse_window, "canonical window x0 y0 x1 y1")->expected(4);
  fuse->add_option("--scale", fuse_scale, "render scale factor")->check(CLI::PositiveNumber);
  fuse->add_option("--cfa", fus.cfa, "Bayer pattern of raw input (RGGB|BGGR|GRBG|GBRG)");
  fuse->add_option("--cfa-black", fus.cfa_black, "raw black level");
  fuse->add_option("--cfa-white", fus.cfa_white, "raw white level");
  add_common_fit_flags(fuse, fus);

  SynthSpec synth_spec;
  std::string synth_kind = "translate", synth_out;
  auto* synth = app.add_subcommand("synth", "generate a ground-truth synthetic burst");
  synth->add_option("--kind", synth_kind, "translate|homography|additive|fence|rain|occlusion")
      ->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_spec.seed, "generator seed");
  synth->add_option("--frames", synth_spec.frames, "frame count");
  synth->add_option("--height", synth_spec.height, "frame height");
  synth->add_option("--width", synth_spec.width, "frame width");
  synth->add_option("--shift-x", synth_spec.shift_x_px, "per-frame x shift (px)");
  synth->add_option("--shift-y", synth_spec.shift_y_px, "per-frame y shift (px)");
  synth->add_option("--motion-px", synth_spec.motion_px, "homography translation cap (px)");
  synth->add_option("--projective", synth_spec.projective, "projective term scale");
  synth->add_option("--amplitude", synth_spec.interf_amplitude, "interference amplitude");
  synth->add_option("--density", synth_spec.rain_density, "rain streaks per 1000 px");
  synth->add_option("--texture-cell", synth_spec.texture_cell_px, "coarsest noise lattice cell (px)");

  std::string metrics_ref, metrics_test, metrics_out;
  auto* metrics = app.add_subcommand("metrics", "score a directory of images against a reference");
  metrics->add_option("--ref", metrics_ref, "reference directory")->required();
  metrics->add_option("--test", metrics_test, "directory under test")->required();
  metrics->add_option("--out", metrics_out, "also write records to this file");

  bool extensive = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification suite");
  gradcheck->add_flag("--extensive", extensive, "more probes per op and template");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(separate)) return cmd_separate(separate, sep);
    if (app.got_subcommand(fuse)) return cmd_fuse(fuse, fus, fuse_window, fuse_scale);
    if (app.got_subcommand(synth)) {
      synth_spec.kind = parse_synth_kind(synth_kind);
      return cmd_synth(synth_spec, synth_out);
    }
    if (app.got_subcommand(metrics)) return cmd_metrics(metrics_ref, metrics_test, metrics_out);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(extensive);
  } catch (const DivergedError& e) {
    std::cerr << "error: diverged run: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
