#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "nir/losses.hpp"
#include "nir/mlp.hpp"
#include "nir/random.hpp"
#include "nir/tape.hpp"
#include "nir/trainer.hpp"

namespace nir {

// Finite-difference verification of the backward rules, always in 64-bit
// mode: analytic gradients against central differences with h = 1e-4 at a
// relative tolerance of 1e-4.

struct GradCheckResult {
  int probes = 0;
  int failures = 0;
  double max_rel_err = 0;
  std::vector<std::string> messages;

  bool ok() const { return failures == 0 && probes > 0; }

  // Pass criterion |a - fd| <= atol + rtol*max(|a|,|fd|); the absolute term
  // absorbs finite-difference noise on near-zero gradients. max_rel_err
  // tracks the strict relative error over well-scaled gradients, the number
  // the 1e-4 tolerance applies to.
  void record(const std::string& who, double analytic, double fd, double rtol) {
    constexpr double kAtol = 1e-5;
    const double mag = std::max(std::fabs(analytic), std::fabs(fd));
    const double diff = std::fabs(analytic - fd);
    ++probes;
    if (mag > 1e-2) max_rel_err = std::max(max_rel_err, diff / mag);
    if (diff > kAtol + rtol * mag) {
      ++failures;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s: analytic=%.8g fd=%.8g diff=%.3g", who.c_str(), analytic,
                    fd, diff);
      messages.push_back(buf);
    }
  }
};

namespace detail {

inline constexpr double kFdH = 1e-4;
inline constexpr double kGradTol = 1e-4;

// Central difference with a Richardson consistency guard: when the h and 2h
// estimates disagree, the probe crossed a kink (relu/abs are only a.e.
// differentiable) and is skipped rather than miscounted.
inline bool guarded_fd(const std::function<double(double)>& f, double x, double& out) {
  const double f1p = f(x + kFdH), f1m = f(x - kFdH);
  const double f2p = f(x + 2 * kFdH), f2m = f(x - 2 * kFdH);
  const double d1 = (f1p - f1m) / (2 * kFdH);
  const double d2 = (f2p - f2m) / (4 * kFdH);
  if (std::fabs(d1 - d2) > std::max(1e-6, 1e-2 * std::fabs(d1))) return false;
  out = d1;
  return true;
}

// FD check of d(loss)/d(param elements) for a scalar builder over a tape.
inline void check_params(GradCheckResult& res, const std::string& who,
                         std::vector<Tensor<double>*> params,
                         const std::function<double()>& loss_value,
                         const std::function<void()>& backward_into_params, Rng& rng,
                         int probes_per_param) {
  for (auto* p : params) p->zero_grad();
  backward_into_params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>* p = params[pi];
    for (int k = 0; k < probes_per_param; ++k) {
      const std::size_t i = static_cast<std::size_t>(rng.uniform_index(p->numel()));
      const double orig = p->data[i];
      double fd = 0;
      const bool usable = guarded_fd(
          [&](double v) {
            p->data[i] = v;
            const double out = loss_value();
            p->data[i] = orig;
            return out;
          },
          orig, fd);
      if (!usable) continue;
      res.record(who + "[p" + std::to_string(pi) + "," + std::to_string(i) + "]", p->grad[i], fd,
                 kGradTol);
    }
  }
}

}  // namespace detail

// Every differentiable op probed at random points.
inline void gradcheck_ops(GradCheckResult& res, int probes_per_op) {
  Rng rng(1234);
  struct OpCase {
    const char* name;
    std::function<typename Tape<double>::Id(Tape<double>&, typename Tape<double>::Id)> build;
    double lo, hi;
  };
  using Id = typename Tape<double>::Id;
  const std::vector<OpCase> cases = {
      {"sin", [](Tape<double>& t, Id x) { return t.sum(t.sin(x, 3.0)); }, -2, 2},
      {"tanh", [](Tape<double>& t, Id x) { return t.sum(t.tanh(x)); }, -2, 2},
      {"sigmoid", [](Tape<double>& t, Id x) { return t.sum(t.sigmoid(x)); }, -2, 2},
      {"relu", [](Tape<double>& t, Id x) { return t.sum(t.relu(x)); }, -2, 2},
      {"abs", [](Tape<double>& t, Id x) { return t.sum(t.abs(x)); }, -2, 2},
      {"square", [](Tape<double>& t, Id x) { return t.sum(t.square(x)); }, -2, 2},
      {"sqrt", [](Tape<double>& t, Id x) { return t.sum(t.sqrt(x)); }, 0.3, 2},
      {"clamp", [](Tape<double>& t, Id x) { return t.sum(t.clamp(x, -0.7, 0.7)); }, -2, 2},
      {"sum", [](Tape<double>& t, Id x) { return t.sum(x); }, -2, 2},
      {"mean", [](Tape<double>& t, Id x) { return t.mean(x); }, -2, 2},
      {"l1", [](Tape<double>& t, Id x) { return t.l1(x); }, -2, 2},
      {"l2sq", [](Tape<double>& t, Id x) { return t.l2sq(x); }, -2, 2},
      {"mul_scalar", [](Tape<double>& t, Id x) { return t.sum(t.mul_scalar(x, -1.7)); }, -2, 2},
      {"add_scalar", [](Tape<double>& t, Id x) { return t.sum(t.add_scalar(x, 0.9)); }, -2, 2},
      {"add", [](Tape<double>& t, Id x) { return t.l2sq(t.add(x, t.sin(x))); }, -2, 2},
      {"sub", [](Tape<double>& t, Id x) { return t.l2sq(t.sub(t.tanh(x), x)); }, -2, 2},
      {"mul", [](Tape<double>& t, Id x) { return t.l2sq(t.mul(x, t.sigmoid(x))); }, -2, 2},
      {"div", [](Tape<double>& t, Id x) { return t.l2sq(t.div(t.scalar(1.0), x)); }, 0.4, 2},
      {"matmul",
       [](Tape<double>& t, Id x) {
         auto w = t.constant(Tensor<double>::matrix(4, 2, {0.3, -0.7, 1.1, 0.2, -0.5, 0.9, 0.4, -1.2}));
         return t.l2sq(t.matmul(x, w));
       },
       -2, 2},
  };
  for (const auto& c : cases) {
    for (int rep = 0; rep < probes_per_op; ++rep) {
      Tensor<double> x(std::vector<std::size_t>{3, 4});
      for (double& v : x.data) v = rng.uniform(c.lo, c.hi);
      x.set_requires_grad(true);
      Tape<double> tape;
      auto id = tape.param(x);
      tape.backward(c.build(tape, id));
      const std::size_t i = static_cast<std::size_t>(rng.uniform_index(x.numel()));
      const double orig = x.data[i];
      double fd = 0;
      const bool usable = detail::guarded_fd(
          [&](double v) {
            Tensor<double> xc = x;
            xc.requires_grad = false;
            xc.data[i] = v;
            Tape<double> t2;
            return t2.value(c.build(t2, t2.constant(xc))).data[0];
          },
          orig, fd);
      if (!usable) continue;
      res.record(std::string(c.name) + "#" + std::to_string(rep), x.grad[i], fd, detail::kGradTol);
    }
  }
}

// The network templates from the task recipes, checked end to end through
// a reconstruction-style loss.
inline void gradcheck_templates(GradCheckResult& res, int probes_per_param) {
  struct TemplateCase {
    const char* name;
    MlpConfig cfg;
  };
  std::vector<TemplateCase> cases;
  {
    const TaskConfig moire = default_recipe(Task::kMoire);
    cases.push_back({"moire.motion(relu 2x256)", moire.motion_net});
    cases.push_back({"moire.scene(siren 4x256)", moire.scene_net});
    cases.push_back({"moire.interf(siren 4x128)", *moire.interf_net});
    const TaskConfig refl = default_recipe(Task::kReflection);
    cases.push_back({"obstruction.motion(siren 4x256)", refl.motion_net});
    const TaskConfig rain = default_recipe(Task::kRain);
    cases.push_back({"rain.scene(siren 5x256)", rain.scene_net});
  }
  Rng rng(99);
  for (const auto& c : cases) {
    Mlp<double> net(c.cfg, rng);
    Tensor<double> coords({4, c.cfg.in_dim});
    for (double& v : coords.data) v = rng.uniform(-0.9, 0.9);
    Tensor<double> target({4, c.cfg.out_dim});
    for (double& v : target.data) v = rng.uniform(-0.5, 0.5);

    auto loss_value = [&] {
      Tape<double> t;
      auto pred = net.forward(t, t.constant(coords));
      return t.value(recon_loss(t, pred, t.constant(target))).data[0];
    };
    auto backward = [&] {
      Tape<double> t;
      auto pred = net.forward(t, t.constant(coords));
      t.backward(recon_loss(t, pred, t.constant(target)));
    };
    detail::check_params(res, c.name, net.params(), loss_value, backward, rng, probes_per_param);
  }
}

// The composite losses, differentiated through small nets.
inline void gradcheck_losses(GradCheckResult& res, int probes_per_param) {
  Rng rng(555);
  MlpConfig flow_cfg;
  flow_cfg.in_dim = 3;
  flow_cfg.out_dim = 2;
  flow_cfg.hidden_layers = 2;
  flow_cfg.hidden_units = 16;
  Mlp<double> g(flow_cfg, rng);
  Tensor<double> coords({5, 3});
  for (double& v : coords.data) v = rng.uniform(-0.8, 0.8);
  const FdSteps steps = FdSteps::for_burst(32, 32, 4);

  auto tv_value = [&] {
    Tape<double> t;
    return t.value(tv_flow_loss(t, g, coords, steps)).data[0];
  };
  auto tv_backward = [&] {
    Tape<double> t;
    t.backward(tv_flow_loss(t, g, coords, steps));
  };
  detail::check_params(res, "loss.tvflow", g.params(), tv_value, tv_backward, rng,
                       probes_per_param);

  MlpConfig f_cfg = flow_cfg;
  f_cfg.in_dim = 2;
  f_cfg.out_dim = 3;
  f_cfg.output_head = OutputHead::kTanhSigned;
  Mlp<double> f1(f_cfg, rng);
  MlpConfig f2_cfg = f_cfg;
  f2_cfg.in_dim = 3;
  Mlp<double> f2(f2_cfg, rng);
  Tensor<double> xy({6, 2}), xyt({6, 3});
  for (double& v : xyt.data) v = rng.uniform(-0.8, 0.8);
  for (std::size_t i = 0; i < 6; ++i) {
    xy.at(i, 0) = xyt.at(i, 0);
    xy.at(i, 1) = xyt.at(i, 1);
  }
  auto build_excl = [&](Tape<double>& t) {
    auto stencil = [&](const Tensor<double>& base, double hx, double hy) {
      Tensor<double> s = base;
      for (std::size_t i = 0; i < s.shape[0]; ++i) {
        s.at(i, 0) += hx;
        s.at(i, 1) += hy;
      }
      return s;
    };
    auto j_of = [&](auto& net, const Tensor<double>& base) {
      auto b = net.forward(t, t.constant(base));
      auto dx = net.forward(t, t.constant(stencil(base, steps.hx, 0)));
      auto dy = net.forward(t, t.constant(stencil(base, 0, steps.hy)));
      return t.hcat2(fd_column(t, b, dx, steps.hx), fd_column(t, b, dy, steps.hy));
    };
    return exclusion_loss(t, j_of(f1, xy), j_of(f2, xyt));
  };
  auto excl_value = [&] {
    Tape<double> t;
    return t.value(build_excl(t)).data[0];
  };
  auto excl_backward = [&] {
    Tape<double> t;
    t.backward(build_excl(t));
  };
  auto params = f1.params();
  for (auto* p : f2.params()) params.push_back(p);
  detail::check_params(res, "loss.exclusion", params, excl_value, excl_backward, rng,
                       probes_per_param);
}

// The full verification suite behind `nir gradcheck` and the acceptance
// gradient criterion.
inline GradCheckResult run_gradcheck(bool extensive = false) {
  GradCheckResult res;
  gradcheck_ops(res, extensive ? 25 : 6);
  gradcheck_templates(res, extensive ? 12 : 3);
  gradcheck_losses(res, extensive ? 8 : 2);
  return res;
}

}  // namespace nir
