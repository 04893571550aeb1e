#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "padkit/error.hpp"
#include "padkit/losses.hpp"

using namespace padkit;

namespace {

constexpr double kTol = 1e-5;

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                const std::vector<double>& x) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = oracle::central_difference(f, x, i);
  return g;
}

void check_gradient(std::span<const double> analytic, std::span<const double> numeric, double tol = kTol) {
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) CHECK(oracle::relative_error(analytic[i], numeric[i]) < tol);
}

}  // namespace

TEST_CASE("cross entropy values") {
  const std::vector<double> zero{0.0, 0.0};
  CHECK(cross_entropy(zero, 0).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> sure{60.0, -60.0};
  CHECK(cross_entropy(sure, 0).value < 1e-40);
  const std::vector<double> wrong{0.0, 800.0};
  CHECK(std::isfinite(cross_entropy(wrong, 0).value));
  CHECK(cross_entropy(wrong, 0).value == doctest::Approx(800.0));
}

TEST_CASE("cross entropy gradient") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t k = 2 + rep % 4;
    std::vector<double> z(k);
    for (double& v : z) v = n(rng);
    const std::size_t cls = rep % k;
    const auto hard = cross_entropy(z, cls);
    check_gradient(hard.gradient, fd_gradient([&](std::span<const double> x) { return cross_entropy(x, cls).value; }, z));
    std::vector<double> t(k);
    double s = 0.0;
    for (double& v : t) s += v = u(rng);
    for (double& v : t) v /= s;
    const auto soft = cross_entropy(z, t);
    CHECK(soft.value >= 0.0);
    check_gradient(soft.gradient, fd_gradient([&](std::span<const double> x) { return cross_entropy(x, t).value; }, z));
  }
}

TEST_CASE("bce and focal values") {
  const std::vector<double> ps{0.01, 0.2, 0.5, 0.77, 0.999};
  for (double p : ps) {
    for (double t : {0.0, 0.3, 1.0}) {
      CHECK(focal(p, t, 0.0).value == bce(p, t).value);
      CHECK(focal(p, t, 2.0).value <= bce(p, t).value);
      CHECK(bce(p, t).value >= 0.0);
    }
  }
  CHECK(bce(1.0, 1.0).value < 1e-6);
  CHECK(bce(0.0, 0.0).value < 1e-6);
  CHECK(focal(1.0, 1.0).value < 1e-6);
  CHECK(std::isfinite(bce(0.0, 1.0).value));
  CHECK(bce(0.3, 1.0).value == doctest::Approx(-std::log(0.3)));
  CHECK(focal(0.3, 0.0, 2.0).value == doctest::Approx(-0.09 * std::log(0.7)));
}

TEST_CASE("bce and focal gradients") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> p(0.02, 0.98), t(0.0, 1.0), g(0.0, 4.0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::vector<double> x{p(rng)};
    const double target = rep % 3 == 0 ? static_cast<double>(rep % 2) : t(rng);
    const double gamma = g(rng);
    check_gradient(bce(x[0], target).gradient,
                   fd_gradient([&](std::span<const double> v) { return bce(v[0], target).value; }, x));
    check_gradient(focal(x[0], target, gamma).gradient,
                   fd_gradient([&](std::span<const double> v) { return focal(v[0], target, gamma).value; }, x));
  }
}

TEST_CASE("pixelwise bce") {
  const std::vector<double> half(9, 0.5);
  CHECK(pixelwise_bce(half, Label::bonafide).value == doctest::Approx(std::log(2.0)));
  CHECK(pixelwise_bce(half, Label::attack).value == doctest::Approx(std::log(2.0)));
  const std::vector<double> ones(4, 1.0);
  CHECK(pixelwise_bce(ones, Label::bonafide).value < 1e-6);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> m(3 + rep % 13);
    for (double& v : m) v = p(rng);
    const Label l = rep % 2 ? Label::bonafide : Label::attack;
    const double t = l == Label::bonafide ? 1.0 : 0.0;
    double mean = 0.0;
    for (double v : m) mean += -(t * std::log(v) + (1 - t) * std::log(1 - v));
    mean /= static_cast<double>(m.size());
    const auto r = pixelwise_bce(m, l);
    CHECK(r.value == doctest::Approx(mean).epsilon(1e-12));
    check_gradient(r.gradient, fd_gradient([&](std::span<const double> v) { return pixelwise_bce(v, l).value; }, m));
  }
}

TEST_CASE("sub-center angle") {
  const SubCenterBank bank = SubCenterBank::random(2, 3, 5, 4);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      double n = 0.0;
      for (double v : bank.center(c, k)) n += v * v;
      CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
    }
  }
  const auto c01 = bank.center(0, 1);
  const std::vector<double> same(c01.begin(), c01.end());
  CHECK(sub_center_angle(same, bank, 0).theta == doctest::Approx(0.0));

  SubCenterBank axes;
  axes.classes = 1;
  axes.sub_centers = 2;
  axes.dim = 3;
  axes.centers = {1, 0, 0, 0, 1, 0};
  const std::vector<double> ortho{0.0, 0.0, 2.5};
  CHECK(sub_center_angle(ortho, axes, 0).theta == doctest::Approx(std::numbers::pi / 2));
  CHECK_THROWS_AS(sub_center_angle(std::vector<double>{0.0, 0.0, 0.0}, axes, 0), ParameterError);
}

TEST_CASE("sub-center angle equals a scan") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = 1 + rep % 8, dim = 2 + rep % 6;
    const SubCenterBank bank = SubCenterBank::random(1, k, dim, 50 + rep);
    std::vector<double> f(dim);
    for (double& v : f) v = n(rng);
    double best = 10.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = bank.center(0, j);
      double dot = 0.0, nf = 0.0, nc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dot += f[d] * c[d];
        nf += f[d] * f[d];
        nc += c[d] * c[d];
      }
      const double th = std::acos(std::clamp(dot / std::sqrt(nf * nc), -1.0, 1.0));
      if (th < best) best = th, arg = j;
    }
    const SubCenterAngle a = sub_center_angle(f, bank, 0);
    CHECK(a.theta == doctest::Approx(best).epsilon(1e-12));
    CHECK(a.sub_center == arg);
  }
}

TEST_CASE("cosine and angle gradients") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t dim = 2 + rep % 5;
    std::vector<double> a(dim), b(dim);
    for (double& v : a) v = n(rng);
    for (double& v : b) v = n(rng);
    const auto c = cosine_with_gradient(a, b);
    check_gradient(c.d_feature, fd_gradient([&](std::span<const double> x) { return cosine_with_gradient(x, b).cosine; }, a));
    check_gradient(c.d_direction, fd_gradient([&](std::span<const double> x) { return cosine_with_gradient(a, x).cosine; }, b));
    const auto t = angle_with_gradient(a, b);
    check_gradient(t.d_feature, fd_gradient([&](std::span<const double> x) { return angle_with_gradient(x, b).theta; }, a));
    check_gradient(t.d_direction, fd_gradient([&](std::span<const double> x) { return angle_with_gradient(a, x).theta; }, b));
  }
}

TEST_CASE("angular margin loss values") {
  const double pi = std::numbers::pi;
  const std::vector<double> t1{1.0}, t0{0.0};
  CHECK(std::abs(angular_margin_loss(std::vector<double>{pi / 2 - 0.5}, t1).value) < 1e-15);
  CHECK(std::abs(angular_margin_loss(std::vector<double>{pi / 2}, t0).value) < 1e-15);
  // The first term has no logarithm, so a bona fide sample at theta 0 gives -cos(0.5).
  CHECK(angular_margin_loss(std::vector<double>{0.0}, t1).value == doctest::Approx(-std::cos(0.5)));
  // 1 - cos(0) is clamped, keeping the value finite.
  CHECK(std::isfinite(angular_margin_loss(std::vector<double>{0.0}, t0).value));
  const std::vector<double> two{0.3, 1.2}, targets{1.0, 0.0};
  const double expected = -(std::cos(0.8) + std::log(1.0 - std::cos(1.2))) / 2.0;
  CHECK(angular_margin_loss(two, targets).value == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("angular margin loss gradient") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> th(0.2, std::numbers::pi - 0.2), t(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> thetas(1 + rep % 6), targets(thetas.size());
    for (double& v : thetas) v = th(rng);
    for (double& v : targets) v = rep % 2 ? t(rng) : static_cast<double>(rng() % 2);
    check_gradient(angular_margin_loss(thetas, targets).gradient,
                   fd_gradient([&](std::span<const double> x) { return angular_margin_loss(x, targets).value; }, thetas));
  }
}

TEST_CASE("gradient reversal") {
  const std::vector<double> g{1.0, -2.0};
  CHECK(grl(g, 0.0) == std::vector<double>{0.0, 0.0});
  CHECK(grl(g, 1.0) == std::vector<double>{-1.0, 2.0});
  const GradientReversal layer{0.5};
  CHECK(layer.forward(g) == g);
  CHECK(layer.backward(g) == std::vector<double>{-0.5, 1.0});
  CHECK_THROWS_AS(grl(g, -1.0), ParameterError);
}

TEST_CASE("reversed domain gradient on a two-layer toy model") {
  // h = tanh(W x); main CE on Wc h, domain CE on Wd h. With reversal the
  // encoder gradient is grad(main) - lambda grad(domain).
  const std::size_t in = 3, hid = 4;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.7);
  std::vector<double> w(hid * in), wc(2 * hid), wd(2 * hid), x(in);
  for (auto* v : {&w, &wc, &wd, &x})
    for (double& e : *v) e = n(rng);
  const std::size_t cls = 1, dom = 0;
  const double lambda = 0.7;

  auto hidden = [&](std::span<const double> wv) {
    std::vector<double> h(hid);
    for (std::size_t i = 0; i < hid; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < in; ++j) s += wv[i * in + j] * x[j];
      h[i] = std::tanh(s);
    }
    return h;
  };
  auto head = [&](const std::vector<double>& hw, const std::vector<double>& h) {
    return std::vector<double>{hw[0] * h[0] + hw[1] * h[1] + hw[2] * h[2] + hw[3] * h[3],
                               hw[4] * h[0] + hw[5] * h[1] + hw[6] * h[2] + hw[7] * h[3]};
  };
  auto main_loss = [&](std::span<const double> wv) { return cross_entropy(head(wc, hidden(wv)), cls).value; };
  auto dom_loss = [&](std::span<const double> wv) { return cross_entropy(head(wd, hidden(wv)), dom).value; };

  const auto h = hidden(w);
  const auto gm = cross_entropy(head(wc, h), cls).gradient;
  const auto gd = cross_entropy(head(wd, h), dom).gradient;
  std::vector<double> dh_main(hid), dh_dom(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    dh_main[i] = wc[i] * gm[0] + wc[hid + i] * gm[1];
    dh_dom[i] = wd[i] * gd[0] + wd[hid + i] * gd[1];
  }
  const auto reversed = grl(dh_dom, lambda);
  std::vector<double> analytic(hid * in);
  for (std::size_t i = 0; i < hid; ++i)
    for (std::size_t j = 0; j < in; ++j)
      analytic[i * in + j] = (dh_main[i] + reversed[i]) * (1.0 - h[i] * h[i]) * x[j];

  const auto fm = fd_gradient(main_loss, w);
  const auto fd = fd_gradient(dom_loss, w);
  std::vector<double> expected(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) expected[i] = fm[i] - lambda * fd[i];
  check_gradient(analytic, expected);
}

TEST_CASE("composite weights") {
  CHECK(kCtelTerms[0].weight == 1.0);
  CHECK(kCtelTerms[1].weight == 1.0);
  CHECK(kHexianhuaTerms[0].weight == 1.0);
  CHECK(kHexianhuaTerms[1].weight == 0.5);
  CHECK(kOpdaiTerms[0].weight == 1.0);
  CHECK(kOpdaiTerms[1].weight == 0.5);
  CHECK(kOpdaiTerms[2].weight == 0.5);
  const double chen[] = {3.0, 1.0, 0.5, 0.5, 0.5, 3.0};
  for (std::size_t i = 0; i < 6; ++i) CHECK(kChenyifanTerms[i].weight == chen[i]);
  CHECK(kIonetworksTerms[0].weight == 0.5);
  CHECK(kIonetworksTerms[1].weight == 0.5);

  CHECK(total_ctel(0, 0) == 0.0);
  CHECK(total_hexianhua(0, 0) == 0.0);
  CHECK(total_opdai(0, 0, 0) == 0.0);
  CHECK(total_chenyifan(0, 0, 0, 0, 0, 0) == 0.0);
  CHECK(total_ionetworks(0, 0) == 0.0);
  CHECK(total_chenyifan(1, 1, 1, 1, 1, 1) == 8.5);
  CHECK(total_ctel(0.25, 0.5) == 0.75);
  CHECK(total_hexianhua(1.0, 1.0) == 1.5);
  CHECK(total_opdai(1.0, 2.0, 4.0) == 4.0);
  CHECK(total_ionetworks(1.0, -3.0) == -1.0);
}

TEST_CASE("composite gradients distribute linearly") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> p(0.05, 0.95), t(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> x(6), targets(6);
    for (double& v : x) v = p(rng);
    for (double& v : targets) v = t(rng);
    auto total = [&](std::span<const double> v) {
      return total_chenyifan(bce(v[0], targets[0]).value, bce(v[1], targets[1]).value,
                             bce(v[2], targets[2]).value, bce(v[3], targets[3]).value,
                             bce(v[4], targets[4]).value, bce(v[5], targets[5]).value);
    };
    std::vector<double> analytic(6);
    for (std::size_t i = 0; i < 6; ++i) analytic[i] = kChenyifanTerms[i].weight * bce(x[i], targets[i]).gradient[0];
    check_gradient(analytic, fd_gradient(total, x));

    // Shared input: both hexianhua terms differentiate the same logits.
    std::vector<double> z{t(rng) * 4 - 2, t(rng) * 4 - 2};
    const std::vector<double> soft{1 - targets[0], targets[0]};
    auto shared = [&](std::span<const double> v) {
      const auto sm = softmax(v);
      return total_hexianhua(cross_entropy(v, soft).value, focal(sm[1], targets[0]).value);
    };
    const auto ce = cross_entropy(z, soft);
    const auto sm = softmax(z);
    const auto fl = focal(sm[1], targets[0]);
    // Chain the focal gradient through softmax[1].
    LossResult fz{fl.value, {-fl.gradient[0] * sm[1] * sm[0], fl.gradient[0] * sm[1] * sm[0]}};
    const std::vector<LossResult> parts{ce, fz};
    const LossResult c = combine(kHexianhuaTerms, parts);
    CHECK(c.value == doctest::Approx(shared(z)).epsilon(1e-14));
    check_gradient(c.gradient, fd_gradient(shared, z));
  }
}
