#include <doctest.h>

#include <cmath>
#include <limits>

#include "bdp/errors.hpp"
#include "bdp/estimate.hpp"
#include "support.hpp"

using namespace bdp;

namespace {

ObservedData poisson_data() {
  ObservedData d;
  d.t_data = {{0, 1, 2, 3}};
  d.p_data = {{0, 2, 3, 6}};
  return d;
}

}  // namespace

TEST_CASE("distance") {
  const std::vector<long> a{3, 5, 8}, b{3, 7, 5};
  CHECK(abc_distance(a, a) == 0.0);
  CHECK(abc_distance(a, b) == doctest::Approx(std::sqrt(13.0)));
  CHECK(abc_distance(a, b) == abc_distance(b, a));
}

TEST_CASE("an infinite threshold returns the prior") {
  const double lo = 1.0, hi = 3.0;
  EstimateRequest req;
  req.framework = Framework::Abc;
  req.p0 = {2.0};
  req.bounds.box = {{lo, hi}};
  req.abc.eps_abc = {std::numeric_limits<double>::infinity()};
  req.abc.max_its = 1;
  req.abc.k = 4000;
  req.se_type = SeType::None;
  const auto r = estimate(poisson_data(), builtin_model("Poisson"), req);
  REQUIRE(r.samples.size() == 4000);
  double sum = 0.0;
  for (const auto& s : r.samples) {
    CHECK(s[0] >= lo);
    CHECK(s[0] <= hi);
    sum += s[0];
  }
  const double mean = sum / 4000.0;
  CHECK(std::abs(mean - 0.5 * (lo + hi)) <= 3.0 * (hi - lo) / std::sqrt(12.0 * 4000.0));
  CHECK(r.p[0] == doctest::Approx(mean));
}

TEST_CASE("property: accepted samples stay in bounds") {
  EstimateRequest req;
  req.framework = Framework::Abc;
  req.p0 = {2.0};
  req.bounds.box = {{0.5, 4.0}};
  req.abc.k = 50;
  req.abc.max_its = 3;
  req.se_type = SeType::None;
  const auto r = estimate(poisson_data(), builtin_model("Poisson"), req);
  REQUIRE(!r.samples.empty());
  for (const auto& s : r.samples) CHECK(req.bounds.contains(s));
  for (const auto& it : r.iterations) CHECK(req.bounds.contains(it));
  CHECK(r.val >= 0.0);
}

TEST_CASE("Verhulst birth rate from one adaptive iteration") {
  const ObservedData d = bdp::testing::verhulst_data(11);
  EstimateRequest req;
  req.framework = Framework::Abc;
  req.p0 = {1.0};
  req.bounds.box = {{0.4, 1.6}};
  req.known = {{0.4, 0.025, 0.0}, {1, 2, 3}};
  req.abc.k = 100;
  req.abc.max_its = 1;
  req.se_type = SeType::None;
  const auto r = estimate(d, builtin_model("Verhulst"), req);
  REQUIRE(r.samples.size() == 100);
  double m = 0.0, m2 = 0.0;
  for (const auto& s : r.samples) {
    m += s[0];
    m2 += s[0] * s[0];
  }
  m /= 100.0;
  const double sd = std::sqrt(m2 / 100.0 - m * m);
  CAPTURE(r.p[0]);
  CAPTURE(sd);
  CHECK(std::abs(r.p[0] - 0.8) <= 3.0 * sd);
  CHECK(r.p[1] == 0.4);
}

TEST_CASE("same seed, same samples") {
  EstimateRequest req;
  req.framework = Framework::Abc;
  req.p0 = {2.0};
  req.bounds.box = {{0.5, 4.0}};
  req.abc.k = 30;
  req.se_type = SeType::None;
  req.seed = 17;
  const auto a = estimate(poisson_data(), builtin_model("Poisson"), req);
  const auto b = estimate(poisson_data(), builtin_model("Poisson"), req);
  CHECK(a.samples == b.samples);
  CHECK(a.p == b.p);
}
