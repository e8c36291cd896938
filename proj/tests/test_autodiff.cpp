#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "nir/adam.hpp"
#include "nir/mlp.hpp"
#include "nir/random.hpp"
#include "nir/tape.hpp"

using nir::Adam;
using nir::AdamConfig;
using nir::Rng;
using nir::Tape;
using nir::Tensor;

namespace {

// Independent scalar oracle for matrix products.
template <typename T>
Tensor<T> matmul_oracle(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> c({a.shape[0], b.shape[1]});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < b.shape[1]; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < a.shape[1]; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

Tensor<double> random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and projector cases") {
  Tape<double> tape;
  auto eye = tape.constant(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}));
  auto m = tape.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  auto r = tape.matmul(eye, m);
  CHECK(tape.value(r).data == std::vector<double>{1, 2, 3, 4});

  auto proj = tape.constant(Tensor<double>::matrix(2, 2, {1, 0, 0, 0}));
  auto v = tape.constant(Tensor<double>::matrix(2, 1, {5, 7}));
  auto pv = tape.matmul(proj, v);
  CHECK(tape.value(pv).data == std::vector<double>{5, 0});
}

TEST_CASE("matmul matches scalar triple-loop oracle") {
  Rng rng(11);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  const auto want = matmul_oracle(a, b);
  Tape<double> tape;
  auto r = tape.matmul(tape.constant(a), tape.constant(b));
  for (std::size_t i = 0; i < want.numel(); ++i)
    CHECK(tape.value(r).data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch raises") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}, 1.0));
  auto b = tape.constant(Tensor<double>({2, 2}, 1.0));
  CHECK_THROWS_AS((void)tape.matmul(a, b), nir::DimensionError);
}

TEST_CASE("elementwise forward values and derivatives at pinned points") {
  Tape<double> tape;
  Tensor<double> x0 = Tensor<double>::scalar(0.0);
  x0.set_requires_grad(true);

  auto xs = tape.param(x0);
  auto s = tape.sin(xs);
  CHECK(tape.value(s).data[0] == 0.0);
  tape.backward(s);
  CHECK(x0.grad[0] == doctest::Approx(1.0));  // d sin / dx at 0

  Tensor<double> x1 = Tensor<double>::scalar(0.0);
  x1.set_requires_grad(true);
  Tape<double> tape2;
  auto th = tape2.tanh(tape2.param(x1));
  CHECK(tape2.value(th).data[0] == 0.0);
  tape2.backward(th);
  CHECK(x1.grad[0] == doctest::Approx(1.0));

  Tensor<double> x2 = Tensor<double>::scalar(-0.3);
  x2.set_requires_grad(true);
  Tape<double> tape3;
  auto ab = tape3.abs(tape3.param(x2));
  CHECK(tape3.value(ab).data[0] == doctest::Approx(0.3));
  tape3.backward(ab);
  CHECK(x2.grad[0] == doctest::Approx(-1.0));
}

TEST_CASE("subgradient conventions at zero") {
  Tensor<double> x = Tensor<double>::scalar(0.0);
  x.set_requires_grad(true);
  {
    Tape<double> tape;
    auto r = tape.relu(tape.param(x));
    tape.backward(r);
    CHECK(x.grad[0] == 0.0);  // relu'(0) = 0
  }
  x.zero_grad();
  {
    Tape<double> tape;
    auto r = tape.abs(tape.param(x));
    tape.backward(r);
    CHECK(x.grad[0] == 0.0);  // sign(0) = 0
  }
}

TEST_CASE("broadcasting: scalar vs tensor and equal shapes only") {
  Tape<double> tape;
  auto v = tape.constant(Tensor<double>::matrix(1, 3, {1, 2, 3}));
  auto s = tape.scalar(10.0);
  CHECK(tape.value(tape.add(v, s)).data == std::vector<double>{11, 12, 13});
  CHECK(tape.value(tape.mul(s, v)).data == std::vector<double>{10, 20, 30});
  auto bad = tape.constant(Tensor<double>::matrix(1, 2, {1, 2}));
  CHECK_THROWS_AS((void)tape.add(v, bad), nir::DimensionError);
}

TEST_CASE("reductions: pinned values and loop oracle") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2}, {3, 4}));
  CHECK(tape.value(tape.l2sq(a)).data[0] == doctest::Approx(25.0));
  auto b = tape.constant(Tensor<double>({3}, {1, 2, 3}));
  CHECK(tape.value(tape.mean(b)).data[0] == doctest::Approx(2.0));

  Rng rng(5);
  auto r = random_tensor(rng, {17});
  double l1 = 0;
  for (double v : r.data) l1 += std::fabs(v);
  CHECK(tape.value(tape.l1(tape.constant(r))).data[0] == doctest::Approx(l1).epsilon(1e-12));

  Tensor<double> empty({0});
  CHECK_THROWS_AS((void)tape.sum(tape.constant(empty)), nir::DimensionError);
}

TEST_CASE("backward: loss = x^2 at x = 3") {
  Tensor<double> x = Tensor<double>::scalar(3.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  auto loss = tape.square(tape.param(x));
  tape.backward(loss);
  CHECK(x.grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: loss = sum(W v) gives grad(W) = outer(1, v)") {
  Tensor<double> w({2, 3}, {0.5, -1, 2, 0, 1, -3});
  w.set_requires_grad(true);
  Tensor<double> v({3, 1}, {1.5, -0.25, 4});
  Tape<double> tape;
  auto loss = tape.sum(tape.matmul(tape.param(w), tape.constant(v)));
  tape.backward(loss);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(w.grad[i * 3 + j] == doctest::Approx(v.data[j]).epsilon(1e-12));
}

TEST_CASE("backward: non-scalar loss rejected, repeated calls accumulate") {
  Tensor<double> x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape<double> tape;
  auto sq = tape.square(tape.param(x));
  CHECK_THROWS_AS(tape.backward(sq), nir::DimensionError);
  auto loss = tape.sum(sq);
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad[0] == doctest::Approx(4.0));  // 2 * (2 * 1)
  CHECK(x.grad[1] == doctest::Approx(8.0));
}

TEST_CASE("gradient check: every differentiable op against central differences") {
  // 100 probes spread across the op set, double precision, h = 1e-4.
  Rng rng(404);
  struct OpCase {
    const char* name;
    std::function<double(Tape<double>&, Tape<double>::Id)> apply;
    double lo, hi;
  };
  const std::vector<OpCase> cases = {
      {"sin", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.sin(x, 2.5))).data[0]; }, -2, 2},
      {"tanh", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.tanh(x))).data[0]; }, -2, 2},
      {"sigmoid", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.sigmoid(x))).data[0]; }, -2, 2},
      {"relu", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.relu(x))).data[0]; }, 0.05, 2},
      {"abs", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.abs(x))).data[0]; }, 0.05, 2},
      {"square", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.square(x))).data[0]; }, -2, 2},
      {"sqrt", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.sqrt(x))).data[0]; }, 0.5, 2},
      {"clamp", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.sum(t.clamp(x, -0.5, 0.5))).data[0]; }, -0.4, 0.4},
      {"l2sq", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.l2sq(x)).data[0]; }, -2, 2},
      {"mean", [](Tape<double>& t, Tape<double>::Id x) { return t.value(t.mean(x)).data[0]; }, -2, 2},
  };
  int probes = 0;
  for (const auto& c : cases) {
    for (int rep = 0; rep < 10; ++rep, ++probes) {
      Tensor<double> x({4}, 0.0);
      for (double& v : x.data) v = rng.uniform(c.lo, c.hi);
      x.set_requires_grad(true);
      Tape<double> tape;
      auto id = tape.param(x);
      (void)c.apply(tape, id);  // ends with the scalar loss as the last node
      tape.backward(static_cast<Tape<double>::Id>(tape.size() - 1));
      for (std::size_t i = 0; i < x.numel(); ++i) {
        const double analytic = x.grad[i];
        const double fd = nir_test::central_diff(
            [&](double xv) {
              Tensor<double> xc = x;
              xc.requires_grad = false;
              xc.data[i] = xv;
              Tape<double> t2;
              return c.apply(t2, t2.constant(xc));
            },
            x.data[i]);
        CHECK_MESSAGE(nir_test::rel_err(analytic, fd) < 1e-4,
                      c.name << " grad[" << i << "] analytic=" << analytic << " fd=" << fd);
      }
    }
  }
  CHECK(probes >= 100);
}

TEST_CASE("gradient check: binary ops and matmul against central differences") {
  Rng rng(405);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor<double> a({3, 2}, 0.0);
    Tensor<double> b({3, 2}, 0.0);
    for (double& v : a.data) v = rng.uniform(-2, 2);
    for (double& v : b.data) v = rng.uniform(0.5, 2);  // keep div well-conditioned
    a.set_requires_grad(true);
    b.set_requires_grad(true);

    enum Kind { kAdd, kSub, kMul, kDiv };
    for (Kind kind : {kAdd, kSub, kMul, kDiv}) {
      auto eval = [&](const Tensor<double>& ta, const Tensor<double>& tb) {
        Tape<double> t;
        auto ia = ta.requires_grad ? t.param(const_cast<Tensor<double>&>(ta)) : t.constant(ta);
        auto ib = tb.requires_grad ? t.param(const_cast<Tensor<double>&>(tb)) : t.constant(tb);
        Tape<double>::Id r{};
        switch (kind) {
          case kAdd: r = t.add(ia, ib); break;
          case kSub: r = t.sub(ia, ib); break;
          case kMul: r = t.mul(ia, ib); break;
          case kDiv: r = t.div(ia, ib); break;
        }
        auto loss = t.l2sq(r);
        t.backward(loss);
        return t.value(loss).data[0];
      };
      a.zero_grad();
      b.zero_grad();
      eval(a, b);
      for (std::size_t i = 0; i < a.numel(); ++i) {
        Tensor<double> ac = a;
        ac.requires_grad = false;
        const double fd = nir_test::central_diff(
            [&](double xv) {
              ac.data[i] = xv;
              Tensor<double> bc = b;
              bc.requires_grad = false;
              Tape<double> t;
              auto ia = t.constant(ac);
              auto ib = t.constant(bc);
              Tape<double>::Id r{};
              switch (kind) {
                case kAdd: r = t.add(ia, ib); break;
                case kSub: r = t.sub(ia, ib); break;
                case kMul: r = t.mul(ia, ib); break;
                case kDiv: r = t.div(ia, ib); break;
              }
              return t.value(t.l2sq(r)).data[0];
            },
            a.data[i]);
        CHECK(nir_test::rel_err(a.grad[i], fd) < 1e-4);
      }
    }
  }

  // matmul parameter gradients
  Tensor<double> w({4, 3}, 0.0);
  Rng rng2(7);
  for (double& v : w.data) v = rng2.uniform(-1, 1);
  w.set_requires_grad(true);
  Tensor<double> x({2, 4}, 0.0);
  for (double& v : x.data) v = rng2.uniform(-1, 1);
  auto loss_of = [&](const Tensor<double>& wc) {
    Tape<double> t;
    return t.value(t.l2sq(t.matmul(t.constant(x), t.constant(wc)))).data[0];
  };
  Tape<double> t;
  auto loss = t.l2sq(t.matmul(t.constant(x), t.param(w)));
  t.backward(loss);
  for (std::size_t i = 0; i < w.numel(); ++i) {
    Tensor<double> wc = w;
    wc.requires_grad = false;
    const double fd = nir_test::central_diff(
        [&](double v) {
          wc.data[i] = v;
          return loss_of(wc);
        },
        w.data[i]);
    CHECK(nir_test::rel_err(w.grad[i], fd) < 1e-4);
  }
}

TEST_CASE("backward through a random 2-layer MLP matches finite differences") {
  Rng rng(42);
  nir::MlpConfig cfg;
  cfg.in_dim = 3;
  cfg.out_dim = 2;
  cfg.hidden_layers = 2;
  cfg.hidden_units = 8;
  cfg.activation = nir::Activation::kSine;
  cfg.output_head = nir::OutputHead::kLinear;
  nir::Mlp<double> net(cfg, rng);

  Tensor<double> coords({5, 3}, 0.0);
  for (double& v : coords.data) v = rng.uniform(-1, 1);

  auto loss_value = [&](const nir::Mlp<double>& m) {
    Tape<double> tape;
    auto out = m.forward(tape, tape.constant(coords));
    return tape.value(tape.l2sq(out)).data[0];
  };

  Tape<double> tape;
  auto out = net.forward(tape, tape.constant(coords));
  auto loss = tape.l2sq(out);
  tape.backward(loss);

  const double h = 1e-4;
  int checked = 0;
  for (auto* p : net.params()) {
    for (std::size_t i = 0; i < p->numel(); i += std::max<std::size_t>(1, p->numel() / 7)) {
      const double orig = p->data[i];
      p->data[i] = orig + h;
      const double up = loss_value(net);
      p->data[i] = orig - h;
      const double dn = loss_value(net);
      p->data[i] = orig;
      const double fd = (up - dn) / (2 * h);
      CHECK_MESSAGE(nir_test::rel_err(p->grad[i], fd) < 1e-4,
                    "param elem " << i << " analytic=" << p->grad[i] << " fd=" << fd);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("linearity of backward") {
  Rng rng(9);
  Tensor<double> x({6}, 0.0);
  for (double& v : x.data) v = rng.uniform(-1, 1);
  x.set_requires_grad(true);

  const double a = 0.7, b = -1.3;
  auto grads_of = [&](bool combined) {
    x.zero_grad();
    Tape<double> t;
    auto id = t.param(x);
    auto l1 = t.l2sq(t.sin(id));
    auto l2 = t.mean(t.tanh(id));
    if (combined) {
      t.backward(t.add(t.mul_scalar(l1, a), t.mul_scalar(l2, b)));
      return x.grad;
    }
    t.backward(l1);
    auto g1 = x.grad;
    x.zero_grad();
    t.backward(l2);
    for (std::size_t i = 0; i < g1.size(); ++i) g1[i] = a * g1[i] + b * x.grad[i];
    return g1;
  };
  const auto combined = grads_of(true);
  const auto summed = grads_of(false);
  for (std::size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(summed[i]).epsilon(1e-9));
}

TEST_CASE("no-NaN contract: division by zero is an explicit error") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2}, {1, 2}));
  auto z = tape.constant(Tensor<double>({2}, {1, 0}));
  CHECK_THROWS_AS((void)tape.div(a, z), nir::NumericError);
}

TEST_CASE("determinism: identical seeds give bit-identical op streams") {
  auto run = [] {
    Rng rng(77);
    nir::MlpConfig cfg;
    cfg.in_dim = 2;
    cfg.out_dim = 1;
    cfg.hidden_layers = 2;
    cfg.hidden_units = 16;
    nir::Mlp<float> net(cfg, rng);
    Tensor<float> coords({9, 2}, 0.0f);
    for (float& v : coords.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tape<float> tape;
    auto loss = tape.l2sq(net.forward(tape, tape.constant(coords)));
    return tape.value(loss).data[0];
  };
  CHECK(run() == run());
}

// ---- Adam ----

namespace {

// Independent scalar Adam, written directly from the update equations.
struct ScalarAdamOracle {
  double m = 0, v = 0;
  int t = 0;
  double lr, b1, b2, eps;
  ScalarAdamOracle(double lr_, double b1_, double b2_, double eps_) : lr(lr_), b1(b1_), b2(b2_), eps(eps_) {}
  double update(double theta, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST_CASE("adam: first step with unit gradient moves by about -lr") {
  Tensor<double> theta = Tensor<double>::scalar(0.0);
  theta.set_requires_grad(true);
  theta.grad[0] = 1.0;
  Adam<double> opt({&theta}, AdamConfig{});
  opt.step();
  // bias correction makes mhat = g and vhat = g^2 on step one
  CHECK(theta.data[0] == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor<double> theta({3}, {1, -2, 0.5});
  theta.set_requires_grad(true);
  Adam<double> opt({&theta}, AdamConfig{});
  opt.step();
  CHECK(theta.data == std::vector<double>{1, -2, 0.5});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: 100 steps on theta^2 matches the scalar oracle to 1e-12") {
  AdamConfig cfg;
  cfg.lr = 0.05;
  Tensor<double> theta = Tensor<double>::scalar(1.0);
  theta.set_requires_grad(true);
  Adam<double> opt({&theta}, cfg);
  ScalarAdamOracle oracle(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
  double ref = 1.0;
  for (int i = 0; i < 100; ++i) {
    theta.zero_grad();
    Tape<double> tape;
    auto loss = tape.square(tape.param(theta));
    tape.backward(loss);
    opt.step();
    ref = oracle.update(ref, 2.0 * ref);
  }
  CHECK(std::fabs(theta.data[0] - ref) < 1e-12);
  CHECK(std::fabs(theta.data[0]) < 1.0);
}

TEST_CASE("adam: invalid learning rate rejected") {
  Tensor<double> theta = Tensor<double>::scalar(1.0);
  theta.set_requires_grad(true);
  AdamConfig cfg;
  cfg.lr = 0;
  CHECK_THROWS_AS(Adam<double>({&theta}, cfg), nir::ConfigError);
}
