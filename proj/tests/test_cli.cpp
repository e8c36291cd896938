#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "nir/config.hpp"
#include "nir/imaging.hpp"
#include "nir/synth.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = NIR_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

int run_capture(const std::string& args, const fs::path& out_file) {
  const std::string cmd = kCli + " " + args + " >" + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// identical directory trees, byte for byte, over the named files
void check_same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    INFO("file ", n);
    CHECK(slurp(a / n) == slurp(b / n));
  }
}

void write_tiny_config(const fs::path& p, int iterations) {
  std::ofstream os(p);
  os << "iterations = " << iterations << "\n";
  os << "net.scene.hidden_layers = 2\nnet.scene.hidden_units = 24\n";
  os << "net.motion.hidden_layers = 2\nnet.motion.hidden_units = 16\n";
  os << "net.interf.hidden_layers = 2\nnet.interf.hidden_units = 16\n";
  os << "excl_subbatch = 16\n";
}

}  // namespace

TEST_CASE("synth is deterministic: same flags produce identical bytes") {
  TempDir a("nir_cli_synth_a"), b("nir_cli_synth_b");
  const std::string flags = "synth --kind rain --seed 9 --frames 3 --height 32 --width 32 --out ";
  REQUIRE(run(flags + a.path.string()) == 0);
  REQUIRE(run(flags + b.path.string()) == 0);
  std::vector<std::string> names{"synth.txt", "gt/motion.nirt", "gt/texture.nirt"};
  for (int f = 0; f < 3; ++f) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "burst/frame_%03d.png", f);
    names.push_back(buf);
    std::snprintf(buf, sizeof(buf), "gt/scene_%03d.nirt", f);
    names.push_back(buf);
    std::snprintf(buf, sizeof(buf), "gt/interf_%03d.nirt", f);
    names.push_back(buf);
  }
  check_same_files(a.path, b.path, names);
}

TEST_CASE("bad invocations map to the documented exit codes") {
  TempDir out("nir_cli_err_out");
  CHECK(run("separate --task nosuch --input /nonexistent --output " + out.path.string()) == 2);
  CHECK(run("separate --task moire --input /nonexistent/dir --output " + out.path.string()) == 1);
  CHECK(run("definitely-not-a-subcommand") == 2);
  CHECK(run("separate --task fuse --input x --output y") == 2);  // fusion lives in `fuse`
}

TEST_CASE("metrics on identical directories reports the identity sentinels") {
  TempDir dir("nir_cli_metrics");
  nir::SynthSpec spec;
  spec.kind = nir::SynthKind::kTranslate;
  spec.height = spec.width = 24;
  spec.frames = 2;
  const auto r = nir::generate(spec);
  fs::create_directories(dir.path / "imgs");
  for (std::size_t f = 0; f < 2; ++f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f%zu.png", f);
    save_image(r.burst.frames[f], (dir.path / "imgs" / buf).string(), r.burst.norm);
  }
  const fs::path capture = dir.path / "stdout.txt";
  REQUIRE(run_capture("metrics --ref " + (dir.path / "imgs").string() + " --test " +
                          (dir.path / "imgs").string(),
                      capture) == 0);
  const std::string text = slurp(capture);
  CHECK(text.find("psnr=inf") != std::string::npos);
  CHECK(text.find("ssim=1.000000") != std::string::npos);
  CHECK(text.find("ncc=1.000000") != std::string::npos);
  CHECK(text.find("si=1.000000") != std::string::npos);
}

TEST_CASE("gradcheck subcommand passes on shipped seeds") {
  CHECK(run("gradcheck") == 0);
}

TEST_CASE("separate writes layers, canonical view, log, manifest, checkpoints") {
  TempDir dir("nir_cli_separate");
  nir::SynthSpec spec;
  spec.kind = nir::SynthKind::kAdditiveInterf;
  spec.height = spec.width = 24;
  spec.frames = 3;
  spec.seed = 3;
  nir::write_synth(nir::generate(spec), dir.path.string());
  write_tiny_config(dir.path / "tiny.cfg", 40);

  const std::string burst = (dir.path / "burst").string();
  const fs::path out_a = dir.path / "out_a";
  const std::string base = "separate --task moire --input " + burst + " --config " +
                           (dir.path / "tiny.cfg").string() + " --seed 4 --output ";
  REQUIRE(run(base + out_a.string()) == 0);
  for (const char* f : {"frame_000_scene.png", "frame_002_scene.png", "frame_000_interf.png",
                        "view_canon.png", "log.jsonl", "manifest.txt", "scene.nirw", "motion.nirw",
                        "interf.nirw"})
    CHECK(fs::exists(out_a / f));

  // rerun into the same path: identical images and manifest
  const fs::path stash = dir.path / "out_first";
  fs::rename(out_a, stash);
  REQUIRE(run(base + out_a.string()) == 0);
  check_same_files(out_a, stash,
                   {"frame_000_scene.png", "frame_001_interf.png", "view_canon.png", "manifest.txt",
                    "scene.nirw", "motion.nirw", "interf.nirw"});

  // the manifest reloads as a config and reproduces the run
  const fs::path out_c = dir.path / "out_c";
  REQUIRE(run("separate --task moire --input " + burst + " --config " +
              (out_a / "manifest.txt").string() + " --output " + out_c.string()) == 0);
  check_same_files(out_a, out_c, {"frame_000_scene.png", "view_canon.png", "scene.nirw"});

  // flags override config-file values
  const fs::path out_d = dir.path / "out_d";
  REQUIRE(run(base + out_d.string() + " --iterations 35") == 0);
  CHECK(slurp(out_d / "manifest.txt").find("iterations = 35") != std::string::npos);

  // the config actually drove the run
  const auto kv = nir::parse_kv_file((out_a / "manifest.txt").string());
  CHECK(kv.at("iterations") == "40");
  CHECK(kv.at("seed") == "4");
  CHECK(kv.at("task") == "moire");
  CHECK(kv.at("result.steps") == "40");
}

TEST_CASE("fuse writes a canonical panorama; --cfa without raw input is a config error") {
  TempDir dir("nir_cli_fuse");
  nir::SynthSpec spec;
  spec.kind = nir::SynthKind::kTranslate;
  spec.height = spec.width = 24;
  spec.frames = 2;
  spec.shift_x_px = 4;
  nir::write_synth(nir::generate(spec), dir.path.string());
  const std::string burst = (dir.path / "burst").string();

  std::ofstream(dir.path / "tiny.cfg") << "iterations = 30\nnet.scene.hidden_layers = 2\n"
                                          "net.scene.hidden_units = 16\nnet.motion.hidden_layers = 2\n"
                                          "net.motion.hidden_units = 12\n";
  const fs::path out_a = dir.path / "fuse_a";
  const std::string base = "fuse --motion homography --input " + burst + " --config " +
                           (dir.path / "tiny.cfg").string() + " --seed 7 --scale 1 --output ";
  REQUIRE(run(base + out_a.string()) == 0);
  CHECK(fs::exists(out_a / "view_canon.png"));
  CHECK(fs::exists(out_a / "manifest.txt"));

  // same seed, same code path: canonical render is bit-identical
  const fs::path stash = dir.path / "fuse_first";
  fs::rename(out_a, stash);
  REQUIRE(run(base + out_a.string()) == 0);
  check_same_files(out_a, stash, {"view_canon.png", "manifest.txt"});

  CHECK(run("fuse --cfa RGGB --input " + burst + " --output " + (dir.path / "bad").string()) == 2);
}

TEST_CASE("separate fans out over a directory of bursts with per-job seeds") {
  TempDir dir("nir_cli_jobs");
  for (const char* name : {"seq_a", "seq_b"}) {
    nir::SynthSpec spec;
    spec.kind = nir::SynthKind::kAdditiveInterf;
    spec.height = spec.width = 16;
    spec.frames = 2;
    spec.seed = name[4];
    const auto r = nir::generate(spec);
    fs::create_directories(dir.path / "all" / name);
    for (std::size_t f = 0; f < 2; ++f) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "frame_%03zu.png", f);
      save_image(r.burst.frames[f], (dir.path / "all" / name / buf).string(), r.burst.norm);
    }
  }
  write_tiny_config(dir.path / "tiny.cfg", 10);
  const fs::path out = dir.path / "out";
  REQUIRE(run("separate --task moire --input " + (dir.path / "all").string() + " --config " +
              (dir.path / "tiny.cfg").string() + " --jobs 2 --seed 100 --output " + out.string()) ==
          0);
  CHECK(fs::exists(out / "seq_a" / "manifest.txt"));
  CHECK(fs::exists(out / "seq_b" / "manifest.txt"));
  const auto kv_a = nir::parse_kv_file((out / "seq_a" / "manifest.txt").string());
  const auto kv_b = nir::parse_kv_file((out / "seq_b" / "manifest.txt").string());
  CHECK(kv_a.at("seed") == "100");
  CHECK(kv_b.at("seed") == "101");
}
