#include <doctest.h>

#include <cmath>
#include <random>

#include "bdp/errors.hpp"
#include "bdp/estimate.hpp"
#include "bdp/uncertainty.hpp"
#include "support.hpp"

using namespace bdp;

namespace {

bool inside(const Polyline& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) {
      in = !in;
    }
  }
  return in;
}

ObservedData discrete_sample(const Model& m, const Params& p, long z0, std::size_t paths,
                             std::size_t obs, std::uint64_t seed) {
  std::vector<double> times(obs);
  for (std::size_t k = 0; k < obs; ++k) times[k] = static_cast<double>(k);
  SimulationOptions o;
  o.k = paths;
  o.seed = seed;
  const auto sim = simulate_discrete(m, p, z0, times, o);
  ObservedData d;
  for (const auto& path : sim) {
    d.t_data.push_back(times);
    d.p_data.push_back(path.states);
  }
  return d;
}

}  // namespace

TEST_CASE("asymptotic covariance of a quadratic") {
  const auto ll = [](std::span<const double> x) { return -x[0] * x[0]; };
  const auto rep = asymptotic_cov(ll, std::vector<double>{0.3});
  REQUIRE(rep.cov);
  CHECK((*rep.cov)(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(rep.se[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
  CHECK(rep.source == "asymptotic");
}

TEST_CASE("Poisson standard error matches the Fisher information") {
  const Model m = builtin_model("Poisson");
  const ObservedData d = discrete_sample(m, Params{3.0}, 0, 4, 30, 21);
  EstimateRequest req;
  req.p0 = {1.0};
  req.bounds.box = {{0.01, 20}};
  const auto r = estimate(d, m, req);
  double total_time = 0.0;
  for (const auto& t : d.t_data) total_time += t.back() - t.front();
  const double want = std::sqrt(r.p[0] / total_time);
  CHECK(std::abs(r.se[0] - want) <= 0.05 * want);
}

TEST_CASE("simulated and asymptotic errors agree within a factor of two") {
  const Model m = builtin_model("linear");
  const ObservedData d = discrete_sample(m, Params{0.5, 0.3}, 6, 3, 6, 4);
  EstimateRequest req;
  req.p0 = {0.4, 0.4};
  req.bounds.box = {{0.01, 3}, {0.01, 3}};
  const auto asym = estimate(d, m, req);
  req.se_type = SeType::Simulated;
  req.num_samples = 30;
  const auto sim = estimate(d, m, req);
  CHECK(sim.cov_source == "simulated");
  for (std::size_t i = 0; i < 2; ++i) {
    CAPTURE(i);
    CHECK(sim.se[i] <= 2.0 * asym.se[i]);
    CHECK(sim.se[i] >= 0.5 * asym.se[i]);
  }
}

TEST_CASE("bootstrap edge cases") {
  SUBCASE("frozen refits give zero covariance") {
    const auto rep = simulated_cov([](std::size_t) { return std::vector<double>{0.7, 1.1}; }, 20);
    REQUIRE(rep.cov);
    CHECK(rep.cov->cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("a minority of failures is skipped") {
    const auto rep = simulated_cov(
        [](std::size_t r) {
          if (r % 4 == 0) throw ComputationError("no fit");
          return std::vector<double>{static_cast<double>(r)};
        },
        20);
    CHECK(rep.cov);
    CHECK(rep.diagnostic.find("5 of 20") != std::string::npos);
  }
  SUBCASE("a majority of failures is an error") {
    CHECK_THROWS_AS(simulated_cov(
                        [](std::size_t r) {
                          if (r % 3 != 0) throw ComputationError("no fit");
                          return std::vector<double>{1.0};
                        },
                        20),
                    ComputationError);
  }
}

TEST_CASE("property: covariance reports are symmetric with se = sqrt(diag)") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 200; ++i) {
    const double a = z(rng), b = z(rng), c = z(rng);
    xs.push_back({a, a + 0.5 * b, 0.1 * c - a});
  }
  const auto rep = sample_cov(xs, "simulated");
  REQUIRE(rep.cov);
  const Matrix& c = *rep.cov;
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(c(i, i) >= 0.0);
    CHECK(rep.se[static_cast<std::size_t>(i)] == std::sqrt(c(i, i)));
  }
  // equal weights reproduce the unweighted estimate; the scale of weights is irrelevant
  const std::vector<double> ones(xs.size(), 1.0), sevens(xs.size(), 7.0);
  CHECK((*sample_cov(xs, "abc-samples", ones).cov - c).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((*sample_cov(xs, "abc-samples", sevens).cov - c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("nearest PSD clips negative eigenvalues") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  const Matrix p = nearest_psd(a);
  CHECK(p(0, 0) == doctest::Approx(1.5));
  CHECK(p(0, 1) == doctest::Approx(1.5));
  CHECK(p(1, 1) == doctest::Approx(1.5));
  Matrix good(2, 2);
  good << 2.0, 0.5, 0.5, 1.0;
  CHECK((nearest_psd(good) - good).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("confidence ellipses") {
  const std::vector<double> level{0.95};
  SUBCASE("identity covariance gives the chi-square radius") {
    const auto e = confidence_ellipse({1.0, -2.0}, Matrix::Identity(2, 2), level);
    REQUIRE(e.size() == 1);
    CHECK(e[0].size() == 256);
    for (const auto& v : e[0]) {
      CHECK(std::hypot(v[0] - 1.0, v[1] + 2.0) == doctest::Approx(2.4477).epsilon(1e-4));
    }
  }
  SUBCASE("zero covariance collapses to the mean") {
    const auto e = confidence_ellipse({0.3, 0.4}, Matrix::Zero(2, 2), level);
    for (const auto& v : e[0]) {
      CHECK(v[0] == 0.3);
      CHECK(v[1] == 0.4);
    }
  }
  SUBCASE("wrong dimension") {
    CHECK_THROWS_AS(confidence_ellipse({0, 0}, Matrix::Identity(3, 3), level), InvalidArgument);
  }
  SUBCASE("Monte Carlo coverage") {
    Matrix cov(2, 2);
    cov << 2.0, 0.8, 0.8, 1.0;
    const auto e = confidence_ellipse({0.5, 1.5}, cov, level);
    const Eigen::LLT<Matrix> llt(cov);
    const Matrix l = llt.matrixL();
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z;
    const int n = 100000;
    int hit = 0;
    for (int i = 0; i < n; ++i) {
      const double z1 = z(rng), z2 = z(rng);
      const double x = 0.5 + l(0, 0) * z1;
      const double y = 1.5 + l(1, 0) * z1 + l(1, 1) * z2;
      hit += inside(e[0], x, y);
    }
    CHECK(std::abs(hit / double(n) - 0.95) <= 0.005);
  }
}

TEST_CASE("forecast with fixed parameters follows the mean") {
  const std::vector<double> times{0, 1, 2, 5, 10};
  const std::vector<double> gamma{1.7};
  const auto b = forecast(builtin_model("Poisson"), 4, times, gamma, std::nullopt);
  CHECK(b.percentiles == default_percentiles());
  for (std::size_t t = 0; t < times.size(); ++t) {
    for (Eigen::Index q = 0; q < b.values.cols(); ++q) {
      CHECK(b.values(static_cast<Eigen::Index>(t), q) == doctest::Approx(4 + 1.7 * times[t]));
    }
  }
}

TEST_CASE("property: percentiles are monotone") {
  const Model m = builtin_model("Verhulst");
  std::vector<double> times(21);
  for (int k = 0; k <= 20; ++k) times[static_cast<std::size_t>(k)] = k;
  Matrix cov = Matrix::Zero(3, 3);
  cov.diagonal() << 0.01, 0.004, 1e-5;
  const std::vector<double> theta{0.8, 0.4, 0.025};
  for (auto interval : {Interval::Confidence, Interval::Prediction}) {
    ForecastOptions o;
    o.interval = interval;
    o.k = 300;
    o.n = 50;
    o.known = {{0.0}, {3}};
    o.bounds.box = {{0, 5}, {0, 5}, {0, 1}};
    const auto b = forecast(m, 10, times, theta, cov, o);
    for (Eigen::Index t = 0; t < b.values.rows(); ++t) {
      for (Eigen::Index q = 1; q < b.values.cols(); ++q) {
        CHECK(b.values(t, q) >= b.values(t, q - 1));
      }
    }
  }
}

TEST_CASE("bands collapse as the covariance vanishes") {
  const Model m = builtin_model("Verhulst");
  const std::vector<double> times{0, 5, 10, 20};
  const std::vector<double> theta{0.8, 0.4, 0.025};
  const Matrix tiny = 1e-14 * Matrix::Identity(3, 3);
  ForecastOptions o;
  o.known = {{0.0}, {3}};
  o.k = 200;
  // same draws scaled by 1e-2: the fm band width shrinks in proportion
  const auto fm = forecast(m, 10, times, theta, tiny, o);
  const auto wider = forecast(m, 10, times, theta, Matrix(1e4 * tiny), o);
  for (Eigen::Index t = 1; t < fm.values.rows(); ++t) {
    const double w = fm.values(t, fm.values.cols() - 1) - fm.values(t, 0);
    const double ww = wider.values(t, wider.values.cols() - 1) - wider.values(t, 0);
    CHECK(w < 1e-3);
    CHECK(w / ww == doctest::Approx(1e-2).epsilon(0.05));
  }
  // simulated means spread only by Monte Carlo error, about sd / sqrt(n)
  o.method = ForecastMethod::Gwa;
  o.k = 60;
  o.n = 400;
  const auto sim = forecast(m, 10, times, theta, tiny, o);
  ForecastOptions pred = o;
  pred.interval = Interval::Prediction;
  pred.k = 2000;
  const auto spread = forecast(m, 10, times, theta, tiny, pred);
  for (Eigen::Index t = 1; t < sim.values.rows(); ++t) {
    const double sd = (spread.values(t, 7) - spread.values(t, 1)) / 3.92;
    CAPTURE(t);
    CHECK(sim.values(t, sim.values.cols() - 1) - sim.values(t, 0) <= 6.0 * sd / std::sqrt(400.0));
  }
}

TEST_CASE("robin Beverton-Holt forecast settles near capacity") {
  const Model m = builtin_model("Hassell");
  std::vector<double> times;
  for (int y = 2015; y <= 2050; ++y) times.push_back(y);
  const std::vector<double> theta{0.369, 0.2367, 0.00384};
  ForecastOptions o;
  o.known = {{1.0}, {3}};
  const auto b = forecast(m, 118, times, theta, std::nullopt, o);
  const Eigen::Index median = 4;
  REQUIRE(b.percentiles[4] == 50.0);
  CHECK(std::abs(b.values(b.values.rows() - 1, median) - 146.0) <= 15.0);
}

TEST_CASE("labels and svg") {
  CHECK(parse_interval("prediction") == Interval::Prediction);
  CHECK(parse_forecast_method("ma") == ForecastMethod::Ma);
  CHECK_THROWS_AS(parse_forecast_method("ode"), InvalidArgument);
  CHECK(percentile({4, 1, 3, 2}, 50) == doctest::Approx(2.5));
  const auto b = forecast(builtin_model("Poisson"), 0, std::vector<double>{0, 1},
                          std::vector<double>{1.0}, std::nullopt);
  const std::string svg = bands_svg(b);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
