#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/trainer.hpp"

namespace nir {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat `key = value` text, mirrored one-to-one with CLI flags. Manifests
// use the same format, so a manifest reloads as a config file.
using KvMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer the short exact form when it round-trips
  char short_buf[40];
  std::snprintf(short_buf, sizeof(short_buf), "%g", v);
  double back;
  if (std::sscanf(short_buf, "%lf", &back) == 1 && back == v) return short_buf;
  return buf;
}

}  // namespace detail

inline KvMap parse_kv_text(std::istream& is) {
  KvMap kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

inline KvMap parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  return parse_kv_text(is);
}

namespace detail {

inline const char* activation_name(Activation a) { return a == Activation::kSine ? "sine" : "relu"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "sine") return Activation::kSine;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation: " + s);
}

inline const char* head_name(OutputHead h) {
  switch (h) {
    case OutputHead::kLinear: return "linear";
    case OutputHead::kTanhSigned: return "tanh";
    case OutputHead::kSigmoidUnit: return "sigmoid";
  }
  return "?";
}

inline OutputHead parse_head(const std::string& s) {
  if (s == "linear") return OutputHead::kLinear;
  if (s == "tanh") return OutputHead::kTanhSigned;
  if (s == "sigmoid") return OutputHead::kSigmoidUnit;
  throw ConfigError("unknown output head: " + s);
}

inline MotionKind parse_motion(const std::string& s) {
  if (s == "homography") return MotionKind::kHomography;
  if (s == "flow") return MotionKind::kFlow;
  if (s == "flow-w") return MotionKind::kFlowW;
  throw ConfigError("unknown motion model: " + s);
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected boolean, got: " + s);
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected number, got: " + s);
  }
}

inline std::uint64_t parse_u64(const std::string& s) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected integer, got: " + s);
  }
}

inline void net_to_kv(const std::string& prefix, const MlpConfig& net,
                      std::vector<std::pair<std::string, std::string>>& out) {
  out.emplace_back(prefix + ".in_dim", std::to_string(net.in_dim));
  out.emplace_back(prefix + ".out_dim", std::to_string(net.out_dim));
  out.emplace_back(prefix + ".hidden_layers", std::to_string(net.hidden_layers));
  out.emplace_back(prefix + ".hidden_units", std::to_string(net.hidden_units));
  out.emplace_back(prefix + ".activation", activation_name(net.activation));
  out.emplace_back(prefix + ".omega0", fmt_double(net.omega0));
  out.emplace_back(prefix + ".head", head_name(net.output_head));
  out.emplace_back(prefix + ".identity_bias", net.identity_bias ? "true" : "false");
}

inline void net_from_kv(const std::string& prefix, const KvMap& kv, MlpConfig& net) {
  auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(prefix + "." + key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("in_dim")) net.in_dim = parse_u64(*v);
  if (const auto* v = get("out_dim")) net.out_dim = parse_u64(*v);
  if (const auto* v = get("hidden_layers")) net.hidden_layers = parse_u64(*v);
  if (const auto* v = get("hidden_units")) net.hidden_units = parse_u64(*v);
  if (const auto* v = get("activation")) net.activation = parse_activation(*v);
  if (const auto* v = get("omega0")) net.omega0 = parse_double(*v);
  if (const auto* v = get("head")) net.output_head = parse_head(*v);
  if (const auto* v = get("identity_bias")) net.identity_bias = parse_bool(*v);
}

}  // namespace detail

// Resolved configuration in a stable key order, fit for diffing.
inline std::vector<std::pair<std::string, std::string>> config_to_kv(const TaskConfig& cfg) {
  using detail::fmt_double;
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("task", task_name(cfg.task));
  out.emplace_back("motion", motion_name(cfg.motion));
  out.emplace_back("formation", formation_name(cfg.formation));
  out.emplace_back("normalization", normalization_name(cfg.normalization));
  out.emplace_back("iterations", std::to_string(cfg.iterations));
  out.emplace_back("batch_fraction", fmt_double(cfg.batch_fraction));
  out.emplace_back("lr", fmt_double(cfg.lr));
  out.emplace_back("seed", std::to_string(cfg.seed));
  out.emplace_back("precision", cfg.precision == Precision::kF64 ? "f64" : "f32");
  out.emplace_back("projective", cfg.projective ? "true" : "false");
  out.emplace_back("excl_subbatch", std::to_string(cfg.excl_subbatch));
  out.emplace_back("checkpoint_every", std::to_string(cfg.checkpoint_every));
  out.emplace_back("lambda.interf", fmt_double(cfg.weights.interf));
  out.emplace_back("lambda.tvflow", fmt_double(cfg.weights.tvflow));
  out.emplace_back("lambda.excl", fmt_double(cfg.weights.excl));
  out.emplace_back("lambda.w", fmt_double(cfg.weights.w));
  detail::net_to_kv("net.scene", cfg.scene_net, out);
  detail::net_to_kv("net.motion", cfg.motion_net, out);
  out.emplace_back("net.interf.present", cfg.interf_net ? "true" : "false");
  if (cfg.interf_net) detail::net_to_kv("net.interf", *cfg.interf_net, out);
  if (cfg.cfa) {
    out.emplace_back("cfa.pattern", cfa_name(cfg.cfa->pattern));
    out.emplace_back("cfa.black", fmt_double(cfg.cfa->black_level));
    out.emplace_back("cfa.white", fmt_double(cfg.cfa->white_level));
  }
  return out;
}

// Applies known keys onto a base config (typically a task recipe). Unknown
// keys are ignored so manifests reload cleanly.
inline TaskConfig config_from_kv(const KvMap& kv, TaskConfig base) {
  using namespace detail;
  auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("task")) base.task = parse_task(*v);
  if (const auto* v = get("motion")) set_motion_kind(base, parse_motion(*v));
  if (const auto* v = get("normalization"))
    base.normalization = (*v == "signed") ? Normalization::kSigned : Normalization::kUnit;
  if (const auto* v = get("iterations")) base.iterations = parse_u64(*v);
  if (const auto* v = get("batch_fraction")) base.batch_fraction = parse_double(*v);
  if (const auto* v = get("lr")) base.lr = parse_double(*v);
  if (const auto* v = get("seed")) base.seed = parse_u64(*v);
  if (const auto* v = get("precision")) {
    if (*v == "f32") base.precision = Precision::kF32;
    else if (*v == "f64") base.precision = Precision::kF64;
    else throw ConfigError("unknown precision: " + *v);
  }
  if (const auto* v = get("projective")) base.projective = parse_bool(*v);
  if (const auto* v = get("excl_subbatch")) base.excl_subbatch = parse_u64(*v);
  if (const auto* v = get("checkpoint_every")) base.checkpoint_every = parse_u64(*v);
  if (const auto* v = get("lambda.interf")) base.weights.interf = parse_double(*v);
  if (const auto* v = get("lambda.tvflow")) base.weights.tvflow = parse_double(*v);
  if (const auto* v = get("lambda.excl")) base.weights.excl = parse_double(*v);
  if (const auto* v = get("lambda.w")) base.weights.w = parse_double(*v);
  net_from_kv("net.scene", kv, base.scene_net);
  net_from_kv("net.motion", kv, base.motion_net);
  if (const auto* v = get("net.interf.present")) {
    if (parse_bool(*v) && !base.interf_net) base.interf_net = MlpConfig{};
    if (!parse_bool(*v)) base.interf_net.reset();
  }
  if (base.interf_net) net_from_kv("net.interf", kv, *base.interf_net);
  if (const auto* v = get("cfa.pattern")) {
    CfaLoad cfa;
    cfa.pattern = parse_cfa(*v);
    if (const auto* b = get("cfa.black")) cfa.black_level = parse_double(*b);
    if (const auto* w = get("cfa.white")) cfa.white_level = parse_double(*w);
    base.cfa = cfa;
  }
  return base;
}

// Run manifest: resolved config plus paths, tool version, and final
// results. Deliberately excludes wall-clock so reruns are byte-identical.
struct RunManifest {
  std::string command;
  std::string input;
  std::string output;
  TaskConfig config;
  std::vector<std::pair<std::string, std::string>> info;  // input geometry etc.
  std::vector<std::pair<std::string, std::string>> results;
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path);
  os << "tool = nir\n";
  os << "version = " << kToolVersion << "\n";
  os << "command = " << m.command << "\n";
  os << "input = " << m.input << "\n";
  os << "output = " << m.output << "\n";
  for (const auto& [k, v] : config_to_kv(m.config)) os << k << " = " << v << "\n";
  for (const auto& [k, v] : m.info) os << k << " = " << v << "\n";
  for (const auto& [k, v] : m.results) os << "result." << k << " = " << v << "\n";
  if (!os) throw IoError("manifest write failed: " + path);
}

}  // namespace nir
