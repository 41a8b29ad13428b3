#include <doctest.h>

#include <cmath>

#include "bdp/errors.hpp"
#include "bdp/linalg.hpp"
#include "bdp/probability.hpp"
#include "support.hpp"

using namespace bdp;
using bdp::testing::linear_pmf_convolution;

namespace {

std::vector<long> range(long a, long b) {
  std::vector<long> v;
  for (long j = a; j < b; ++j) v.push_back(j);
  return v;
}

std::vector<double> row(const Model& m, const Params& p, long i, double t, ProbMethod method,
                        long j_end, const ProbOptions& o = {}) {
  const std::vector<long> z0{i};
  const auto zt = range(0, j_end);
  const std::vector<double> ts{t};
  return probability(m, p, z0, zt, ts, method, o).values;
}

}  // namespace

TEST_CASE("Poisson pmf from zero") {
  const Model m = builtin_model("Poisson");
  const Params p{1.0};
  double fact = 1.0;
  for (long k = 0; k < 12; ++k) {
    if (k > 0) fact *= static_cast<double>(k);
    const double want = std::exp(-1.0) / fact;
    CHECK(prob_expm(m, p, 0, k, 1.0) == doctest::Approx(want).epsilon(1e-10));
    CHECK(prob_uniform(m, p, 0, k, 1.0) == doctest::Approx(want).epsilon(1e-8));
    CHECK(std::abs(prob_ilt(m, p, 0, k, 1.0) - want) < 1e-5);
  }
}

TEST_CASE("pure-death single individual") {
  const Model m = builtin_model("pure-death");
  const Params p{1.0};
  const double want = 1.0 - std::exp(-1.0);
  CHECK(prob_expm(m, p, 1, 0, 1.0) == doctest::Approx(want).epsilon(1e-14));
  CHECK(std::abs(prob_uniform(m, p, 1, 0, 1.0) - prob_expm(m, p, 1, 0, 1.0)) < 1e-8);
  CHECK(std::abs(prob_ilt(m, p, 1, 0, 1.0) - want) < 1e-4);
}

TEST_CASE("Erlangization on the two-state chain") {
  const Model m = builtin_model("pure-death");
  const Params p{1.0};
  const TruncationWindow w{0, 1};
  CHECK(prob_erlang(m, p, 1, 0, 1.0, w, 1) == doctest::Approx(0.5).epsilon(1e-14));
  double prev = 0.0;
  const double limit = 1.0 - std::exp(-1.0);
  for (std::size_t k : {1, 10, 100, 1000}) {
    const double v = prob_erlang(m, p, 1, 0, 1.0, w, k);
    CHECK(v > prev);
    CHECK(v < limit);
    prev = v;
  }
  CHECK(limit - prev < 1e-3);
}

TEST_CASE("diffusion mean of the linear model") {
  const Model m = builtin_model("linear");
  const Params p{0.5, 0.45};
  const std::vector<double> ts{0.5, 1.0, 3.0};
  const auto mom = diffusion_moments(m, p, 10.0, ts);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    CHECK(std::abs(mom.mean[k] - 10.0 * std::exp(0.05 * ts[k])) < 1e-6);
  }
}

TEST_CASE("oua stationary variance") {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.005, 0.0};
  const auto eq = stable_equilibrium(m, p);
  REQUIRE(eq.has_value());
  CHECK(*eq == doctest::Approx(100.0).epsilon(1e-9));
  // lambda = mu = 40 at z = 100, H = gamma (1 - 2 alpha z) - nu = -0.4
  const double want = 80.0 / 0.8;
  double s0 = 0, s1 = 0, s2 = 0;
  for (long j = 0; j < 400; ++j) {
    const double d = prob_oua(m, p, 30, j, 1000.0);
    s0 += d;
    s1 += d * j;
    s2 += d * j * j;
  }
  const double var = s2 / s0 - (s1 / s0) * (s1 / s0);
  CHECK(std::abs(var - want) / want < 1e-6);
  CHECK(std::abs(s1 / s0 - 100.0) < 1e-6);
}

TEST_CASE("gwa closed values") {
  const Model m = builtin_model("linear");
  const Params p{2.0, 1.0};
  const double t = std::log(2.0);
  CHECK(prob_gwa(m, p, 1, 0, t) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(prob_gwa(m, p, 1, 1, t) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  CHECK(prob_gwa(m, p, 1, 3, t) == doctest::Approx(2.0 / 9.0 * 4.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("gwa on the linear model is the exact law") {
  const Model m = builtin_model("linear");
  const Params p{0.5, 0.45};
  const auto exact = linear_pmf_convolution(10, 0.5, 0.45, 1.0, 80);
  double sum = 0.0;
  for (long j = 0; j <= 80; ++j) {
    const double g = prob_gwa(m, p, 10, j, 1.0);
    sum += g;
    CHECK(std::abs(g - exact[static_cast<std::size_t>(j)]) < 1e-12);
    CHECK(std::abs(g - prob_expm(m, p, 10, j, 1.0)) < 1e-6);
    for (auto anchor : {GwaAnchor::J, GwaAnchor::Max, GwaAnchor::Min, GwaAnchor::Midpoint}) {
      CHECK(std::abs(prob_gwa(m, p, 10, j, 1.0, anchor) - g) < 1e-12);
    }
  }
  CHECK(std::abs(sum - 1.0) < 1e-8);
  CHECK(linear_bd_pmf(10, 12, 0.5, 0.45, 1.0) == doctest::Approx(exact[12]).epsilon(1e-12));
}

TEST_CASE("gwasa saddlepoint") {
  const Model m = builtin_model("linear");
  const Params p{0.5, 0.45};
  const auto exact = linear_pmf_convolution(10, 0.5, 0.45, 1.0, 80);
  std::size_t mode = 0;
  for (std::size_t j = 1; j < exact.size(); ++j)
    if (exact[j] > exact[mode]) mode = j;
  const double sp = prob_gwasa(m, p, 10, static_cast<long>(mode), 1.0);
  CHECK(std::abs(sp - exact[mode]) / exact[mode] <= 0.02);
  CHECK(prob_gwasa(m, p, 10, 0, 1.0) == doctest::Approx(exact[0]).epsilon(1e-12));
}

TEST_CASE("sim agrees with expm (chi-square 1%)") {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.025, 0.0};
  const std::size_t k = 100000;
  ProbOptions o;
  o.k = k;
  o.seed = 12;
  const auto sim = row(m, p, 15, 1.0, ProbMethod::Sim, 41, o);
  const auto ex = row(m, p, 15, 1.0, ProbMethod::Expm, 41);
  // pool neighbouring states until every bin expects at least 20 hits
  double chi2 = 0.0, e_acc = 0.0, o_acc = 0.0;
  int bins = 0;
  for (std::size_t j = 0; j < ex.size(); ++j) {
    e_acc += ex[j] * k;
    o_acc += sim[j] * k;
    if (e_acc >= 20.0 || j + 1 == ex.size()) {
      chi2 += (o_acc - e_acc) * (o_acc - e_acc) / e_acc;
      ++bins;
      e_acc = o_acc = 0.0;
    }
  }
  REQUIRE(bins == 24);
  CHECK(chi2 < 41.638);  // chi-square(23) 99% quantile
}

TEST_CASE("property: window methods give proper distributions") {
  const std::vector<std::pair<std::string, Params>> cases = {
      {"linear", {0.5, 0.45}},
      {"Verhulst", {0.8, 0.4, 0.025, 0.0}},
      {"Hassell", {0.75, 0.25, 0.01, 1.0}},
      {"M/M/inf", {3.0, 0.2}},
      {"Moran", {0.5, 0.4, 0.01, 0.02, 30.0}},
  };
  for (const auto& [label, p] : cases) {
    CAPTURE(label);
    const Model m = builtin_model(label);
    const TruncationWindow w = clip_window({0, 120}, m, p);
    ProbOptions o;
    o.z_trunc = w;
    const std::vector<long> z0{10};
    const auto zt = range(w.z_min, w.z_max + 1);
    const std::vector<double> ts{0.5, 2.0};
    const auto ex = probability(m, p, z0, zt, ts, ProbMethod::Expm, o).values;
    const auto un = probability(m, p, z0, zt, ts, ProbMethod::Uniform, o).values;
    const auto er = probability(m, p, z0, zt, ts, ProbMethod::Erlang, o).values;
    for (std::size_t ti = 0; ti < 2; ++ti) {
      double se = 0, su = 0, sr = 0;
      for (std::size_t j = 0; j < zt.size(); ++j) {
        const std::size_t k = ti * zt.size() + j;
        se += ex[k];
        su += un[k];
        sr += er[k];
        CHECK(ex[k] >= 0.0);
        CHECK(ex[k] <= 1.0);
        CHECK(std::abs(ex[k] - un[k]) <= 1e-8);
      }
      CHECK(std::abs(se - 1.0) < 1e-8);
      CHECK(std::abs(su - 1.0) < 1e-8);
      CHECK(std::abs(sr - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("property: expm vs Erlang(150) per entry") {
  const std::vector<std::pair<std::string, Params>> cases = {
      {"linear", {0.5, 0.45}}, {"Verhulst", {0.8, 0.4, 0.025, 0.0}}, {"Hassell", {0.75, 0.25, 0.01, 1.0}}};
  for (const auto& [label, p] : cases) {
    CAPTURE(label);
    const Model m = builtin_model(label);
    for (double t : {0.5, 1.0, 2.0}) {
      CAPTURE(t);
      const auto ex = row(m, p, 10, t, ProbMethod::Expm, 60);
      const auto er = row(m, p, 10, t, ProbMethod::Erlang, 60);
      double worst = 0.0;
      for (std::size_t j = 0; j < ex.size(); ++j) worst = std::max(worst, std::abs(ex[j] - er[j]));
      CHECK(worst <= 1e-3);
    }
  }
}

TEST_CASE("Erlang error shrinks like 1/k") {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.025, 0.0};
  const auto ex = prob_expm(m, p, 15, 15, 1.0);
  const double e1 = std::abs(prob_erlang(m, p, 15, 15, 1.0, std::nullopt, 150) - ex);
  const double e2 = std::abs(prob_erlang(m, p, 15, 15, 1.0, std::nullopt, 1500) - ex);
  CHECK(e2 == doctest::Approx(e1 / 10).epsilon(0.05));
}

TEST_CASE("property: expm vs ilt at moderate t") {
  const std::vector<std::pair<std::string, Params>> cases = {
      {"linear", {0.5, 0.45}}, {"Verhulst", {0.8, 0.4, 0.025, 0.0}}, {"Hassell", {0.75, 0.25, 0.01, 1.0}}};
  for (const auto& [label, p] : cases) {
    CAPTURE(label);
    const Model m = builtin_model(label);
    const auto ex = row(m, p, 10, 1.0, ProbMethod::Expm, 40);
    const auto il = row(m, p, 10, 1.0, ProbMethod::Ilt, 40);
    for (std::size_t j = 0; j < ex.size(); ++j) CHECK(std::abs(ex[j] - il[j]) <= 1e-3);
  }
}

TEST_CASE("property: Chapman-Kolmogorov") {
  const Model m = builtin_model("Hassell");
  const Params p{0.75, 0.25, 0.01, 1.0};
  const auto w = TruncationWindow{0, 150};
  const auto g = build_generator(m, p, w);
  const Matrix a = expm(g.q * 0.7), b = expm(g.q * 1.6);
  for (long j : {5L, 10L, 20L}) {
    double ck = 0.0;
    for (long z = 0; z <= 150; ++z) ck += a(10, z) * b(z, j);
    CHECK(std::abs(ck - prob_expm(m, p, 10, j, 2.3, w)) < 1e-6);
  }
}

TEST_CASE("tensor layout and shared times") {
  const Model m = builtin_model("linear");
  const Params p{0.5, 0.45};
  const std::vector<long> z0{3, 8}, zt{2, 5, 9};
  const std::vector<double> ts{0.5, 1.5};
  const auto pt = probability(m, p, z0, zt, ts, ProbMethod::Expm);
  for (std::size_t ti = 0; ti < 2; ++ti)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        CHECK(pt(ti, a, b) == doctest::Approx(prob_expm(m, p, z0[a], zt[b], ts[ti])).epsilon(1e-12));
}

TEST_CASE("method labels and errors") {
  for (const char* s : {"expm", "uniform", "Erlang", "ilt", "da", "oua", "gwa", "gwasa", "sim"}) {
    CHECK(to_string(parse_prob_method(s)) == s);
  }
  CHECK_THROWS_AS(parse_prob_method("pade"), InvalidArgument);
  const std::vector<long> z0{500}, zt{1};
  const std::vector<double> ts{1.0};
  ProbOptions o;
  o.z_trunc = TruncationWindow{0, 100};
  CHECK_THROWS_AS(probability(builtin_model("linear"), Params{0.5, 0.45}, z0, zt, ts,
                              ProbMethod::Expm, o),
                  InvalidArgument);
}
