#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "kiteopt/diffkit.hpp"
#include "kiteopt/guessgen.hpp"
#include "kiteopt/pilot.hpp"

using namespace kiteopt;

namespace {

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b))); }

CollocationNlp small_nlp(int intervals, double wind = 8.0) {
  PilotOptions opts;
  opts.intervals = intervals;
  return make_nlp(SystemParams{}, wind, opts);
}

}  // namespace

TEST_CASE("dual arithmetic") {
  using D = diff::Dual<2>;
  const D x(0.7, 0);
  const D y(-1.3, 1);
  const D f = x * y + sin(x) / (1.0 + y * y) - exp(x) * sqrt(x);
  const double fx = y.value() + std::cos(0.7) / (1.0 + 1.69) - std::exp(0.7) * (std::sqrt(0.7) + 0.5 / std::sqrt(0.7));
  const double fy = 0.7 - std::sin(0.7) * 2.0 * -1.3 / ((1.0 + 1.69) * (1.0 + 1.69));
  CHECK(f.tangents()[0] == doctest::Approx(fx).epsilon(1e-14));
  CHECK(f.tangents()[1] == doctest::Approx(fy).epsilon(1e-14));
}

TEST_CASE("dense gradients") {
  SUBCASE("sum of sines") {
    auto f = diff::make_scalar_function(3, [](auto z) {
      using std::sin;
      return sin(z[0]) + sin(z[1]) + sin(z[2]);
    });
    const std::vector<double> z{0.0, 1.0, 2.0};
    const auto g = diff::gradient(f, z);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(std::cos(z[i])).epsilon(1e-15));
  }
  SUBCASE("product over more inputs than one pass carries") {
    const int n = 19;
    auto f = diff::make_scalar_function(n, [n](auto z) {
      auto p = z[0];
      for (int i = 1; i < n; ++i) p = p * z[i];
      return p;
    });
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) z[i] = 1.0 + 0.05 * i;
    double prod = 1.0;
    for (double v : z) prod *= v;
    const auto g = diff::gradient(f, z);
    for (int i = 0; i < n; ++i) CHECK(g[i] == doctest::Approx(prod / z[i]).epsilon(1e-14));
  }
}

TEST_CASE("identity Jacobian") {
  const int n = 12;
  auto g = diff::make_vector_function(n, n, [](auto z, auto out) {
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i];
  });
  std::vector<double> z(n, 0.3);
  const auto pattern = diff::SparsityPattern::identity(n);
  diff::JacobianStats stats;
  const auto v = diff::jacobian(g, z, pattern, {}, &stats);
  REQUIRE(v.size() == static_cast<std::size_t>(n));
  for (double e : v) CHECK(e == 1.0);
  CHECK(stats.seed_directions == 1);
  CHECK(stats.forward_passes == 1);
}

TEST_CASE("coloring separates columns sharing a row") {
  diff::SparsityPattern p;
  p.rows = 3;
  p.cols = 4;
  p.add(0, 0);
  p.add(0, 1);
  p.add(1, 1);
  p.add(1, 2);
  p.add(2, 3);
  p.canonicalize();
  const auto c = diff::color_columns(p);
  CHECK(c.color[0] != c.color[1]);
  CHECK(c.color[1] != c.color[2]);
  CHECK(c.num_colors == 2);
}

TEST_CASE("banded function: compressed Jacobian matches central differences") {
  const int n = 30;
  auto g = diff::make_vector_function(n, n - 2, [](auto z, auto out) {
    using std::cos;
    using std::exp;
    for (std::size_t i = 0; i + 2 < z.size(); ++i) out[i] = z[i] * z[i + 1] - exp(z[i + 2]) + cos(z[i] * z[i + 2]);
  });
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> z(n);
  for (double& v : z) v = u(rng);
  const auto pattern = diff::detect_pattern(g, z);
  CHECK(pattern.nnz() == 3u * (n - 2));
  diff::JacobianStats stats;
  const auto vals = diff::jacobian(g, z, pattern, {}, &stats);
  CHECK(stats.seed_directions == 3);
  const auto fd = diff::finite_difference_jacobian(g, z);
  for (std::size_t e = 0; e < pattern.nnz(); ++e) CHECK(rel_err(vals[e], fd[pattern.row[e]][pattern.col[e]]) < 1e-8);
}

TEST_CASE("local Hessian of a small element") {
  auto f = [](const auto& v) {
    using std::sin;
    return v[0] * v[0] * v[1] + sin(v[1]) * v[2];
  };
  const std::array<double, 3> v{0.4, 1.1, -2.0};
  const auto h = diff::local_hessian<3>(f, v);
  CHECK(h[0][0] == doctest::Approx(2.0 * 1.1).epsilon(1e-8));
  CHECK(h[0][1] == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(h[1][1] == doctest::Approx(-std::sin(1.1) * -2.0).epsilon(1e-8));
  CHECK(h[1][2] == doctest::Approx(std::cos(1.1)).epsilon(1e-8));
  CHECK(h[2][1] == h[1][2]);
  CHECK(std::fabs(h[2][2]) < 1e-10);
}

TEST_CASE("collocation Jacobian at five intervals") {
  const CollocationNlp nlp = small_nlp(5);
  std::vector<double> z = perturb(nlp, synth_guess(nlp), 11, 0.1);
  const CollocationConstraints fn(nlp);

  SUBCASE("predicted pattern equals the detected one") {
    diff::SparsityPattern predicted = nlp.jacobian_pattern();
    predicted.canonicalize();
    CHECK(diff::detect_pattern(fn, z) == predicted);
  }
  SUBCASE("values agree with central differences") {
    const auto& pattern = nlp.jacobian_pattern();
    std::vector<double> vals(pattern.nnz());
    nlp.jacobian(z, vals);
    const auto fd = diff::finite_difference_jacobian(fn, z);
    double worst = 0.0;
    for (std::size_t e = 0; e < pattern.nnz(); ++e) {
      worst = std::max(worst, rel_err(vals[e], fd[pattern.row[e]][pattern.col[e]]));
    }
    CHECK(worst < 1e-6);
  }
  SUBCASE("evaluation is linear in the seed direction") {
    const auto& pattern = nlp.jacobian_pattern();
    std::vector<double> j1(pattern.nnz()), j2(pattern.nnz());
    nlp.jacobian(z, j1);
    nlp.jacobian(z, j2);
    CHECK(j1 == j2);
    const int n = nlp.num_variables();
    std::vector<double> dir(n);
    for (int i = 0; i < n; ++i) dir[i] = std::sin(1.0 + i);
    // J * (a d) = a (J * d) through an explicit product
    auto product = [&](double a) {
      std::vector<double> out(pattern.rows, 0.0);
      for (std::size_t e = 0; e < pattern.nnz(); ++e) out[pattern.row[e]] += j1[e] * a * dir[pattern.col[e]];
      return out;
    };
    const auto p1 = product(1.0);
    const auto p3 = product(3.0);
    for (int r = 0; r < pattern.rows; ++r) CHECK(p3[r] == doctest::Approx(3.0 * p1[r]).epsilon(1e-12));
  }
  SUBCASE("objective gradient matches central differences") {
    std::vector<double> g(nlp.num_variables());
    nlp.gradient(z, g);
    for (int i = 0; i < nlp.num_variables(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::fabs(z[i]));
      std::vector<double> zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (nlp.objective(zp) - nlp.objective(zm)) / (2.0 * h);
      CHECK(std::fabs(g[i] - fd) < 1e-6 * std::max(1.0, std::fabs(fd)));
    }
  }
}

TEST_CASE("seed directions do not grow with the mesh") {
  int seeds5 = 0;
  int seeds40 = 0;
  for (int n : {5, 40}) {
    const CollocationNlp nlp = small_nlp(n);
    const auto z = synth_guess(nlp);
    const CollocationConstraints fn(nlp);
    diff::SparsityPattern pattern = nlp.jacobian_pattern();
    diff::JacobianStats stats;
    diff::jacobian(fn, z, pattern, {}, &stats);
    (n == 5 ? seeds5 : seeds40) = stats.seed_directions;
  }
  CHECK(seeds40 <= 20);
  CHECK(seeds5 <= seeds40);
}
