#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"
#include "nir/formation.hpp"
#include "nir/random.hpp"

using nir::CfaPattern;
using nir::FormationKind;
using nir::Tape;
using nir::Tensor;

TEST_CASE("rain formation pinned cases") {
  Tape<double> tape;
  auto o = tape.constant(Tensor<double>::matrix(1, 3, {0.2, 0.2, 0.2}));

  auto u0 = tape.constant(Tensor<double>::matrix(1, 1, {0.0}));
  auto i0 = compose(tape, FormationKind::kRainAchromatic, o, u0);
  CHECK(tape.value(i0).data == std::vector<double>{0.2, 0.2, 0.2});

  auto u1 = tape.constant(Tensor<double>::matrix(1, 1, {1.0}));
  auto i1 = compose(tape, FormationKind::kRainAchromatic, o, u1);
  CHECK(tape.value(i1).data == std::vector<double>{1.0, 1.0, 1.0});

  auto uh = tape.constant(Tensor<double>::matrix(1, 1, {0.5}));
  auto ih = compose(tape, FormationKind::kRainAchromatic, o, uh);
  for (double v : tape.value(ih).data) CHECK(v == doctest::Approx(0.6));
}

TEST_CASE("fence formation: alpha 1 shows only the fence layer") {
  Tape<double> tape;
  auto o = tape.constant(Tensor<double>::matrix(2, 3, {0.1, 0.2, 0.3, 0.9, 0.8, 0.7}));
  auto u = tape.constant(Tensor<double>::matrix(2, 3, {0.5, 0.5, 0.5, 0.4, 0.3, 0.2}));
  auto a = tape.constant(Tensor<double>::matrix(2, 1, {1.0, 1.0}));
  auto out = compose(tape, FormationKind::kFenceAlpha, o, u, a);
  CHECK(tape.value(out).data == tape.value(u).data);
}

TEST_CASE("scene_only equals additive with zero interference") {
  Tape<double> tape;
  auto o = tape.constant(Tensor<double>::matrix(2, 3, {0.1, -0.2, 0.3, 0.9, 0.0, -0.7}));
  auto u = tape.constant(Tensor<double>({2, 3}, 0.0));
  auto a = compose(tape, FormationKind::kSceneOnly, o);
  auto b = compose(tape, FormationKind::kAdditive, o, u);
  CHECK(tape.value(a).data == tape.value(b).data);
}

TEST_CASE("fence and rain outputs stay in [0,1] for in-range inputs") {
  nir::Rng rng(2);
  Tape<double> tape;
  Tensor<double> o({16, 3}), u3({16, 3}), u1({16, 1}), al({16, 1});
  for (auto* t : {&o, &u3})
    for (double& v : t->data) v = rng.uniform(0, 1);
  for (auto* t : {&u1, &al})
    for (double& v : t->data) v = rng.uniform(0, 1);
  auto fence = compose(tape, FormationKind::kFenceAlpha, tape.constant(o), tape.constant(u3),
                       tape.constant(al));
  auto rain = compose(tape, FormationKind::kRainAchromatic, tape.constant(o), tape.constant(u1));
  for (double v : tape.value(fence).data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : tape.value(rain).data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("compose shape validation") {
  Tape<double> tape;
  auto o = tape.constant(Tensor<double>({2, 3}, 0.5));
  auto u_bad = tape.constant(Tensor<double>({2, 2}, 0.5));
  CHECK_THROWS_AS((void)compose(tape, FormationKind::kAdditive, o, u_bad), nir::DimensionError);
  CHECK_THROWS_AS((void)compose(tape, FormationKind::kAdditive, o), nir::DimensionError);
  auto u = tape.constant(Tensor<double>({2, 3}, 0.5));
  CHECK_THROWS_AS((void)compose(tape, FormationKind::kFenceAlpha, o, u), nir::DimensionError);
}

TEST_CASE("compose gradients match finite differences for every kind") {
  nir::Rng rng(9);
  for (auto kind : {FormationKind::kAdditive, FormationKind::kFenceAlpha, FormationKind::kRainAchromatic}) {
    const std::size_t uc = kind == FormationKind::kRainAchromatic ? 1 : 3;
    Tensor<double> o({3, 3}), u({3, uc}), al({3, 1});
    for (double& v : o.data) v = rng.uniform(0.1, 0.9);
    for (double& v : u.data) v = rng.uniform(0.1, 0.9);
    for (double& v : al.data) v = rng.uniform(0.1, 0.9);
    o.set_requires_grad(true);
    u.set_requires_grad(true);

    auto loss_of = [&](const Tensor<double>& oc, const Tensor<double>& ucv) {
      Tape<double> t;
      auto io = t.constant(oc);
      auto iu = t.constant(ucv);
      auto out = kind == FormationKind::kFenceAlpha
                     ? compose(t, kind, io, iu, t.constant(al))
                     : compose(t, kind, io, iu);
      return t.value(t.l2sq(out)).data[0];
    };

    Tape<double> tape;
    auto io = tape.param(o);
    auto iu = tape.param(u);
    auto out = kind == FormationKind::kFenceAlpha
                   ? compose(tape, kind, io, iu, tape.constant(al))
                   : compose(tape, kind, io, iu);
    tape.backward(tape.l2sq(out));

    for (std::size_t i = 0; i < o.numel(); ++i) {
      Tensor<double> oc = o;
      oc.requires_grad = false;
      const double fd = nir_test::central_diff(
          [&](double v) {
            oc.data[i] = v;
            return loss_of(oc, u);
          },
          o.data[i]);
      CHECK(nir_test::rel_err(o.grad[i], fd) < 1e-4);
    }
    for (std::size_t i = 0; i < u.numel(); ++i) {
      Tensor<double> ucv = u;
      ucv.requires_grad = false;
      const double fd = nir_test::central_diff(
          [&](double v) {
            ucv.data[i] = v;
            return loss_of(o, ucv);
          },
          u.data[i]);
      CHECK(nir_test::rel_err(u.grad[i], fd) < 1e-4);
    }
  }
}

TEST_CASE("bayer masks keep exactly the sampled channel") {
  Tape<double> tape;
  Tensor<double> pred({4, 3}, 1.0);
  std::vector<std::pair<std::int64_t, std::int64_t>> pos{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  auto masked = bayer_mask(tape, tape.constant(pred), CfaPattern::kRGGB, pos);
  const auto& v = tape.value(masked);
  CHECK(v.data == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1});

  // 2x2 tile covers R once, G twice, B once, for every pattern
  for (auto p : {CfaPattern::kRGGB, CfaPattern::kBGGR, CfaPattern::kGRBG, CfaPattern::kGBRG}) {
    int counts[3] = {0, 0, 0};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) ++counts[nir::cfa_channel_at(p, r, c)];
    CHECK(counts[0] == 1);
    CHECK(counts[1] == 2);
    CHECK(counts[2] == 1);
  }
}

TEST_CASE("unknown CFA pattern rejected") {
  CHECK_THROWS_AS((void)nir::parse_cfa("XYZW"), nir::ConfigError);
  CHECK(nir::parse_cfa("GBRG") == CfaPattern::kGBRG);
}
