#include <doctest.h>

#include <cmath>

#include "bdp/errors.hpp"
#include "bdp/estimate.hpp"
#include "bdp/io.hpp"
#include "bdp/probability.hpp"
#include "support.hpp"

using namespace bdp;

namespace {

ObservedData one_jump() {
  ObservedData d;
  d.scheme = Scheme::Continuous;
  d.t_data = {{0.0, 1.0, 2.0}};
  d.p_data = {{1, 2, 2}};
  return d;
}

EstimateRequest request(std::vector<double> p0, std::vector<std::pair<double, double>> box) {
  EstimateRequest r;
  r.p0 = std::move(p0);
  r.bounds.box = std::move(box);
  r.se_type = SeType::None;
  return r;
}

ObservedData discrete(const std::vector<DiscretePath>& paths) {
  ObservedData d;
  for (const auto& p : paths) {
    d.t_data.push_back(p.obs_times);
    d.p_data.push_back(p.states);
  }
  return d;
}

}  // namespace

TEST_CASE("continuous log-likelihood by hand") {
  const Model m = builtin_model("linear");
  const ObservedData d = one_jump();
  for (const Params& p : {Params{0.3, 0.2}, Params{1.5, 0.01}}) {
    CHECK(loglik_continuous(d, m, p) ==
          doctest::Approx(std::log(p[0]) - 3 * p[0] - 3 * p[1]).epsilon(1e-14));
  }
  const auto s = continuous_stats(d);
  CHECK(s.total_up() == 1.0);
  CHECK(s.total_time() == 2.0);

  ObservedData quiet;
  quiet.scheme = Scheme::Continuous;
  quiet.t_data = {{0.0, 4.0}};
  quiet.p_data = {{3, 3}};
  CHECK(loglik_continuous(quiet, m, Params{0.3, 0.2}) == doctest::Approx(-(0.9 + 0.6) * 4));

  ObservedData twice = d;
  twice.t_data.push_back(d.t_data[0]);
  twice.p_data.push_back(d.p_data[0]);
  CHECK(loglik_continuous(twice, m, Params{0.3, 0.2}) ==
        doctest::Approx(2 * loglik_continuous(d, m, Params{0.3, 0.2})));
  CHECK(loglik_continuous(d, builtin_model("pure-death"), Params{0.3}) == -INFINITY);
}

TEST_CASE("continuous MLE") {
  const Model m = builtin_model("linear");
  SUBCASE("closed form on the single jump") {
    const auto r = mle_continuous(one_jump(), m, request({0.5, 0.5}, {{0, 5}, {0, 5}}));
    CHECK(r.p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(r.p[1] == 0.0);
    CHECK(r.method == "closed-form");
  }
  SUBCASE("closed form agrees with numeric maximisation") {
    const auto paths = simulate_continuous(m, Params{0.6, 0.4}, 10L, 5.0, 4, false, 3);
    ObservedData d;
    d.scheme = Scheme::Continuous;
    for (const auto& p : paths) {
      d.t_data.push_back(p.jump_times);
      d.p_data.push_back(p.states);
      d.t_data.back().push_back(5.0);
      d.p_data.back().push_back(p.states.back());
    }
    auto req = request({0.5, 0.5}, {{1e-6, 5}, {1e-6, 5}});
    const auto closed = mle_continuous(d, m, req);
    req.constraints.push_back({Constraint::Kind::Inequality,
                               [](std::span<const double> x) { return x[0] + 10.0; }});
    const auto numeric = mle_continuous(d, m, req);
    CHECK(numeric.method == "numeric");
    CHECK(std::abs(closed.p[0] - numeric.p[0]) < 1e-5);
    CHECK(std::abs(closed.p[1] - numeric.p[1]) < 1e-5);
  }
  SUBCASE("pure-birth data gives no deaths") {
    const auto paths = simulate_continuous(builtin_model("pure-birth"), Params{0.5}, 3L, 2.0, 2, false, 4);
    ObservedData d;
    d.scheme = Scheme::Continuous;
    for (const auto& p : paths) {
      d.t_data.push_back(p.jump_times);
      d.p_data.push_back(p.states);
      d.t_data.back().push_back(2.0);
      d.p_data.back().push_back(p.states.back());
    }
    CHECK(mle_continuous(d, m, request({0.5, 0.5}, {{0, 5}, {0, 5}})).p[1] == 0.0);
  }
  SUBCASE("no occupancy") {
    ObservedData d;
    d.scheme = Scheme::Continuous;
    d.t_data = {{0.0, 1.0}};
    d.p_data = {{0, 0}};
    CHECK_THROWS_AS(mle_continuous(d, m, request({0.5, 0.5}, {{0, 5}, {0, 5}})), ComputationError);
  }
}

TEST_CASE("dnm Poisson MLE is increments over time") {
  const Model m = builtin_model("Poisson");
  SimulationOptions o;
  o.k = 3;
  o.seed = 6;
  const auto d = discrete(simulate_discrete(m, Params{2.0}, 0L,
                                            std::vector<double>{0, 1.5, 2, 4, 5, 7.5}, o));
  double inc = 0, time = 0;
  for (std::size_t k = 0; k < d.p_data.size(); ++k) {
    inc += static_cast<double>(d.p_data[k].back() - d.p_data[k].front());
    time += d.t_data[k].back() - d.t_data[k].front();
  }
  const auto r = dnm_estimate(d, m, request({1.0}, {{0.01, 10}}));
  CHECK(std::abs(r.p[0] - inc / time) < 1e-4);
}

TEST_CASE("dnm reports an all-zero likelihood") {
  ObservedData d;
  d.t_data = {{0, 1, 2}};
  d.p_data = {{5, 3, 2}};
  CHECK_THROWS_AS(dnm_estimate(d, builtin_model("pure-birth"), request({0.5}, {{0.01, 2}})),
                  ComputationError);
}

TEST_CASE("grouped likelihood equals per-transition evaluation bit for bit") {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.025, 0.0};
  const ObservedData d = bdp::testing::verhulst_data(1, 2, 30);
  ProbOptions o;
  o.z_trunc = data_window(d, m, p);
  const double grouped = loglik_discrete(d, m, p, ProbMethod::Expm, o);
  // same groups evaluated one transition at a time
  double single = 0.0;
  for (const auto& g : group_transitions(d)) {
    const double dt = g.dt;
    const auto pt = probability(m, p, g.from, g.to, std::span(&dt, 1), ProbMethod::Expm, o);
    for (const auto& e : g.entries) {
      const auto a = std::lower_bound(g.from.begin(), g.from.end(), e.z_prev) - g.from.begin();
      const auto b = std::lower_bound(g.to.begin(), g.to.end(), e.z_next) - g.to.begin();
      single += static_cast<double>(e.count) *
                std::log(std::max(pt(0, static_cast<std::size_t>(a), static_cast<std::size_t>(b)), 1e-300));
    }
  }
  CHECK(grouped == single);
  CHECK(grouped == loglik_discrete(d, m, p, ProbMethod::Expm, o));
}

TEST_CASE("dispatcher routing and validation") {
  const Model m = builtin_model("linear");
  SUBCASE("dnm on continuous data is the continuous MLE") {
    auto req = request({0.5, 0.5}, {{0, 5}, {0, 5}});
    const auto a = estimate(one_jump(), m, req);
    const auto b = mle_continuous(one_jump(), m, req);
    CHECK(a.p == b.p);
  }
  SUBCASE("everything known") {
    auto req = request({}, {});
    req.known = {{0.5, 0.4}, {0, 1}};
    ObservedData d;
    d.t_data = {{0, 1}};
    d.p_data = {{5, 6}};
    CHECK_THROWS_AS(estimate(d, m, req), InvalidArgument);
  }
  SUBCASE("em needs discrete data") {
    auto req = request({0.5, 0.5}, {{0, 5}, {0, 5}});
    req.framework = Framework::Em;
    CHECK_THROWS_AS(estimate(one_jump(), m, req), InvalidArgument);
  }
  SUBCASE("p0 outside bounds") {
    ObservedData d;
    d.t_data = {{0, 1}};
    d.p_data = {{5, 6}};
    CHECK_THROWS_AS(estimate(d, m, request({7.0, 0.5}, {{0, 5}, {0, 5}})), InvalidArgument);
  }
  SUBCASE("known parameters are merged back") {
    ObservedData d;
    d.t_data = {{0, 1, 2, 3}};
    d.p_data = {{10, 12, 11, 14}};
    auto req = request({0.5}, {{0.01, 3}});
    req.known = {{0.3}, {1}};
    const auto r = estimate(d, m, req);
    REQUIRE(r.p.size() == 2);
    CHECK(r.p[1] == 0.3);
    CHECK(r.estimated == std::vector<std::size_t>{0});
  }
}

TEST_CASE("lse objective landscape (gwa)") {
  const Model m = builtin_model("linear");
  SimulationOptions o;
  o.k = 10;
  o.seed = 21;
  std::vector<double> times;
  for (int i = 0; i <= 20; ++i) times.push_back(i * 0.5);
  const auto d = discrete(simulate_discrete(m, Params{0.6, 0.3}, 20L, times, o));
  const double at = lse_objective(d, m, Params{0.6, 0.3}, SquaresMethod::Gwa);
  for (double f : {0.5, 1.5}) {
    CHECK(at < lse_objective(d, m, Params{0.6 * f, 0.3}, SquaresMethod::Gwa));
    CHECK(at < lse_objective(d, m, Params{0.6, 0.3 * f}, SquaresMethod::Gwa));
    CHECK(at < lse_objective(d, m, Params{0.6 * f, 0.3 * f}, SquaresMethod::Gwa));
  }
}

TEST_CASE("lse recovers parameters from data on the fm mean curve") {
  // pure-birth with gamma = ln 2 doubles its mean every unit of time, and the
  // Poisson mean grows by gamma per unit, so integer data sit on the curves
  ObservedData births, arrivals;
  births.t_data = {{0, 1, 2, 3, 4, 5, 6}};
  births.p_data = {{4, 8, 16, 32, 64, 128, 256}};
  arrivals.t_data = {{0, 1, 2, 3, 5}};
  arrivals.p_data = {{2, 5, 8, 11, 17}};
  auto req = request({0.2}, {{0.01, 3}});
  req.framework = Framework::Lse;
  req.squares = SquaresMethod::Fm;
  CHECK(std::abs(estimate(births, builtin_model("pure-birth"), req).p[0] - std::log(2.0)) < 1e-3);
  CHECK(std::abs(estimate(arrivals, builtin_model("Poisson"), req).p[0] - 3.0) < 1e-3);
}

TEST_CASE("lse expm on the Verhulst synthetic data is biased low") {
  const Model m = builtin_model("Verhulst");
  const ObservedData d = bdp::testing::verhulst_data(2021);
  auto req = request({0.5, 0.5, 0.02}, {{1e-3, 2}, {1e-3, 2}, {1e-4, 0.1}});
  req.known = {{0.0}, {3}};
  req.framework = Framework::Lse;
  req.squares = SquaresMethod::Expm;
  req.constraints.push_back(
      {Constraint::Kind::Inequality, [](std::span<const double> x) { return x[0] - x[1]; }});
  const auto r = estimate(d, m, req);
  MESSAGE("lse expm: " << r.p[0] << " " << r.p[1] << " " << r.p[2]);
  CHECK(r.p[0] < 0.8);
  CHECK(r.p[1] < 0.4);
}

TEST_CASE("dnm is invariant to enlarging an adequate window (robin)") {
  const char* dir = std::getenv("BDPKIT_DATA");
  const std::string path = std::string(dir ? dir : "data") + "/robin.csv";
  const ObservedData d = read_observations(path);
  const Model m = builtin_model("linear");
  auto req = request({0.5, 0.5}, {{1e-3, 1}, {1e-3, 1}});
  const auto a = estimate(d, m, req);
  req.prob.z_trunc = TruncationWindow{0, 320};
  const auto b = estimate(d, m, req);
  CHECK(std::abs(a.p[0] - b.p[0]) < 1e-6);
  CHECK(std::abs(a.p[1] - b.p[1]) < 1e-6);
  CHECK(a.capacity == std::nullopt);
}
