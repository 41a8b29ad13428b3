#include <doctest.h>

#include <cmath>

#include "bdp/errors.hpp"
#include "bdp/laplace.hpp"
#include "bdp/linalg.hpp"
#include "bdp/models.hpp"
#include "support.hpp"

using namespace bdp;

TEST_CASE("Lentz golden ratio") {
  const auto one = [](std::size_t) { return Complex(1.0); };
  const Complex x = lentz(one, one, 1e-12);
  CHECK(std::abs(x - (std::sqrt(5.0) - 1.0) / 2.0) < 1e-9);
  // tiny-value substitution does not matter
  const Complex y = lentz(one, one, 1e-12, 1e-35);
  CHECK(std::abs(x - y) < 1e-12);
}

TEST_CASE("Lentz two-term fraction") {
  const double b2 = 1e12;
  const auto a = [](std::size_t k) { return Complex(k == 1 ? 4.0 : (k == 2 ? 1.0 : 0.0)); };
  const auto b = [&](std::size_t k) { return Complex(k == 1 ? 1.0 : b2); };
  CHECK(std::abs(lentz(a, b) - 4.0 / (1.0 + 1.0 / b2)) < 1e-9);
}

TEST_CASE("Lentz with a zero first denominator uses the tiny substitute") {
  // 1/(0 + 1/(1 + 1/(1 + ...))) = 1/golden = 1.618...
  const auto a = [](std::size_t) { return Complex(1.0); };
  const auto b = [](std::size_t k) { return Complex(k == 1 ? 0.0 : 1.0); };
  for (double tiny : {1e-30, 1e-35}) {
    CHECK(std::abs(lentz(a, b, 1e-12, tiny) - (1.0 + std::sqrt(5.0)) / 2.0) < 1e-9);
  }
}

TEST_CASE("transform of an absorbing state") {
  const Model m = builtin_model("pure-death");
  for (Complex s : {Complex(1.0), Complex(0.3, 2.0)}) {
    CHECK(std::abs(transform_pij(m, Params{1.0}, 0, 0, s) - 1.0 / s) < 1e-12);
  }
}

TEST_CASE("transform of the linear chain matches quadrature of the exact pmf") {
  const Params p{0.5, 0.45};
  const Model m = builtin_model("linear");
  const long i = 3, j = 5;
  for (Complex s : {Complex(1.0), Complex(0.5, 1.0)}) {
    // Simpson on [0, 40]; e^{-40 Re s} is negligible for Re s >= 0.5 with a bounded pmf
    const double T = 80.0;
    const int n = 16000;
    const double h = T / n;
    Complex acc = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double t = k * h;
      const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      const double pij = t == 0.0 ? (i == j ? 1.0 : 0.0)
                                  : bdp::testing::linear_pmf_convolution(i, 0.5, 0.45, t, j)[j];
      acc += w * std::exp(-s * t) * pij;
    }
    acc *= h / 3.0;
    CHECK(std::abs(transform_pij(m, p, i, j, s, 1e-12) - acc) < 1e-8);
    TransformTable table(m, p, s, 20, 1e-12);
    CHECK(std::abs(table(i, j) - acc) < 1e-8);
  }
}

TEST_CASE("Verhulst transform matches quadrature over expm") {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.025, 0.0};
  const auto g = build_generator(m, p, {0, 40});
  const double h = 0.01;
  const Matrix step = expm(g.q * h);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(41);
  row(15) = 1.0;
  const int n = 6000;  // t up to 60
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * std::exp(-k * h) * row(10);
    row = row * step;
  }
  acc *= h / 3.0;
  CHECK(std::abs(transform_pij(m, p, 15, 10, Complex(1.0), 1e-10) - acc) < 1e-6);
}

TEST_CASE("truncated table is the resolvent of the truncated generator") {
  const Model m = builtin_model("linear");
  const Params p{0.9, 0.4};
  const long top = 12;
  const auto g = build_generator(m, p, {0, top});
  for (Complex s : {Complex(1.0), Complex(0.3, 2.0), Complex(-0.1, 5.0)}) {
    const Eigen::MatrixXcd resolvent =
        (s * Eigen::MatrixXcd::Identity(top + 1, top + 1) - g.q.cast<Complex>()).inverse();
    auto table = TransformTable::truncated(m, p, s, top);
    double worst = 0.0;
    for (long i = 0; i <= top; ++i) {
      for (long j = 0; j <= top; ++j) worst = std::max(worst, std::abs(table(i, j) - resolvent(i, j)));
    }
    CHECK(worst < 1e-12);
  }
  // inverted back, it reproduces expm of the same generator
  const Matrix pt = expm(g.q * 1.5);
  for (long i : {0L, 4L, 12L}) {
    for (long j : {0L, 7L, 12L}) {
      const auto F = [&](Complex s) { return TransformTable::truncated(m, p, s, top)(i, j); };
      CHECK(std::abs(invert(F, 1.5, InversionMethod::Talbot) - pt(i, j)) < 1e-8);
    }
  }
}

TEST_CASE("property: initial value theorem") {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.025, 0.0};
  const Complex s(1e6);
  for (long i : {0L, 3L, 15L}) {
    CHECK(std::abs(s * transform_pij(m, p, i, i, s) - 1.0) < 1e-4);
    CHECK(std::abs(transform_pij(m, p, i, i + 2, s)) < 1e-10);
  }
}

TEST_CASE("property: both branches agree on the diagonal") {
  const Model m = builtin_model("linear");
  const Params p{0.5, 0.45};
  TransformTable table(m, p, Complex(0.7, 0.2), 30, 1e-12);
  for (long i = 0; i < 10; ++i) {
    CHECK(std::abs(table(i, i) - transform_pij(m, p, i, i, Complex(0.7, 0.2), 1e-12)) < 1e-10);
  }
}

TEST_CASE("inversion of analytic pairs") {
  const auto inv_s = [](Complex s) { return 1.0 / s; };
  const auto exp2 = [](Complex s) { return 1.0 / (s + 2.0); };
  const auto ramp = [](Complex s) { return 1.0 / (s * s); };
  for (auto method : {InversionMethod::Euler, InversionMethod::Talbot,
                      InversionMethod::TalbotEulerFallback, InversionMethod::GaverStehfest}) {
    CAPTURE(to_string(method));
    const bool gs = method == InversionMethod::GaverStehfest;
    CHECK(std::abs(invert(inv_s, 1.0, method) - 1.0) < 1e-6);
    CHECK(std::abs(invert(exp2, 1.0, method) - std::exp(-2.0)) < (gs ? 1e-4 : 1e-6));
    CHECK(std::abs(invert(ramp, 3.0, method) - 3.0) < (gs ? 1e-5 : 1e-6));
  }
}

TEST_CASE("inversion method labels") {
  CHECK(parse_inversion_method("cme-talbot") == InversionMethod::TalbotEulerFallback);
  CHECK(parse_inversion_method("gaver-stehfest") == InversionMethod::GaverStehfest);
  CHECK_THROWS_AS(parse_inversion_method("dehoog"), InvalidArgument);
  CHECK(inversion_rule(InversionMethod::Euler, 1.0).nodes.size() == 33);
  CHECK(inversion_rule(InversionMethod::GaverStehfest, 1.0).nodes.size() == 14);
  CHECK(inversion_rule(InversionMethod::Talbot, 1.0).nodes.size() == 24);
}

TEST_CASE("property: inversion of linear-chain transforms recovers the pmf") {
  const Model m = builtin_model("linear");
  const Params p{0.5, 0.45};
  const long i = 10;
  const double t = 1.0;
  const auto exact = bdp::testing::linear_pmf_convolution(i, 0.5, 0.45, t, 60);
  double worst = 0.0;
  for (long j = 0; j <= 60; ++j) {
    const auto F = [&](Complex s) { return transform_pij(m, p, i, j, s); };
    worst = std::max(worst, std::abs(invert(F, t, InversionMethod::TalbotEulerFallback) -
                                     exact[static_cast<std::size_t>(j)]));
  }
  CHECK(worst <= 1e-4);
}
