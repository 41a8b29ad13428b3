#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bdp/cli.hpp"
#include "bdp/errors.hpp"
#include "bdp/io.hpp"

using namespace bdp;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string data_dir() {
  const char* dir = std::getenv("BDPKIT_DATA");
  return dir ? dir : "data";
}

std::filesystem::path scratch() {
  const auto dir = std::filesystem::temp_directory_path() / "bdp_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("probability of one Poisson arrival") {
  const auto r = call({"probability", "--model", "Poisson", "--params", "1", "--z0", "0", "--zt",
                       "1", "--t", "1"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t,z0,zt,probability");
  const double p = std::stod(row.substr(row.rfind(',') + 1));
  CHECK(std::abs(p - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("help and usage errors") {
  CHECK(call({"--help"}).code == 0);
  CHECK(call({}).code == 1);
  CHECK(call({"simulate", "--model", "linear", "--params", "0.5,0.4"}).code == 1);  // no --z0
  CHECK(call({"simulate", "--model", "nope", "--params", "1", "--z0", "3", "--times", "0,1"}).code == 1);
  CHECK(call({"simulate", "--model", "linear", "--params", "0.5", "--z0", "3", "--times", "0,1"}).code == 1);
  CHECK(call({"probability", "--model", "linear", "--params", "0.5,0.4", "--z0", "3", "--zt", "2",
              "--t", "1", "--method", "magic"}).code == 1);
}

TEST_CASE("computational failures exit with 2") {
  const auto dir = scratch();
  const std::string csv = (dir / "down.csv").string();
  write_file_atomic(csv, "path_id,time,count\n1,0,5\n1,1,3\n1,2,2\n");
  const auto r = call({"estimate", "--data", csv, "--model", "pure-birth", "--p0", "0.5",
                       "--bounds", "0.01:2"});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("arguments are validated before any computation") {
  const auto dir = scratch();
  const std::string out = (dir / "never.json").string();
  const std::string ci = (dir / "never.csv").string();
  const std::string data = data_dir() + "/robin.csv";
  // each of these would otherwise run a full fit first
  const std::vector<std::vector<std::string>> bad{
      {"--bounds", "0:1"},                        // one bound for two parameters
      {"--bounds", "1:0,0:1"},                    // lo > hi
      {"--bounds", "0:1,0:1", "--ci-levels", "1.5"},
      {"--bounds", "0:1,0:1", "--con", "p0 >> p1"},
      {"--bounds", "0:1,0:1", "--framework", "lse", "--se-type", "asymptotic"},
      {"--bounds", "0:1,0:1", "--likelihood", "sim"},  // sim needs an explicit seed
  };
  for (const auto& extra : bad) {
    std::vector<std::string> args{"estimate", "--data", data, "--model", "linear", "--p0",
                                  "0.3,0.2", "--out", out, "--ci-out", ci};
    args.insert(args.end(), extra.begin(), extra.end());
    CAPTURE(extra.back());
    const auto r = call(args);
    CHECK(r.code == 1);
    CHECK_FALSE(std::filesystem::exists(out));
    CHECK_FALSE(std::filesystem::exists(ci));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("property: seeded output is byte-identical") {
  const std::vector<std::string> base{"simulate", "--model", "Verhulst", "--params",
                                      "0.8,0.4,0.025,0", "--z0", "10", "--times", "0:20:1",
                                      "--k", "5", "--method", "gwa"};
  auto with_seed = [&](const std::string& s) {
    auto a = base;
    a.insert(a.end(), {"--seed", s});
    return call(a);
  };
  const auto a = with_seed("5"), b = with_seed("5"), c = with_seed("6");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
  CHECK(a.out.rfind("path_id,time,state\n", 0) == 0);

  const std::vector<std::string> threaded{"--threads", "3"};
  auto t = threaded;
  t.insert(t.end(), base.begin(), base.end());
  t.insert(t.end(), {"--seed", "5"});
  CHECK(call(t).out == a.out);
}

TEST_CASE("robin linear estimate") {
  const auto dir = scratch();
  const std::string ci = (dir / "region.csv").string();
  const auto r = call({"estimate", "--data", data_dir() + "/robin.csv", "--model", "linear",
                       "--p0", "0.3,0.2", "--bounds", "0.001:2,0.001:2", "--ci-out", ci});
  REQUIRE(r.code == 0);
  const auto res = parse_result_json(r.out);
  CHECK(std::abs(res.p[0] - 0.2845) < 0.02);
  CHECK(std::abs(res.p[1] - 0.2350) < 0.02);
  CHECK(res.framework == "dnm");
  REQUIRE(std::filesystem::exists(ci));
  std::ifstream in(ci);
  std::string header;
  std::getline(in, header);
  CHECK(header == "level,x,y");
  std::filesystem::remove_all(dir);
}

TEST_CASE("forecast bands to a file") {
  const auto dir = scratch();
  const std::string out = (dir / "bands.csv").string();
  const std::string svg = (dir / "bands.svg").string();
  const auto r = call({"forecast", "--model", "Poisson", "--params", "2", "--z0", "5", "--times",
                       "0:3:1", "--percentiles", "10,50,90", "--out", out, "--svg", svg});
  REQUIRE(r.code == 0);
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "time,p10,p50,p90");
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    const double t = std::stod(cell);
    while (std::getline(cells, cell, ',')) CHECK(std::stod(cell) == doctest::Approx(5 + 2 * t));
    ++rows;
  }
  CHECK(rows == 4);
  CHECK(std::filesystem::exists(svg));
  std::filesystem::remove_all(dir);
}

TEST_CASE("constraint mini-language") {
  const std::vector<double> p{2.0, 1.0, 0.25};
  const auto c1 = parse_constraint("p0 > p1");
  CHECK(c1.kind == Constraint::Kind::Inequality);
  CHECK(c1.fn(p) == doctest::Approx(1.0));
  const auto c2 = parse_constraint("p[2] <= 0.5");
  CHECK(c2.fn(p) == doctest::Approx(0.25));
  const auto c3 = parse_constraint("p0 == 2*p1");
  CHECK(c3.kind == Constraint::Kind::Equality);
  CHECK(c3.fn(p) == doctest::Approx(0.0));
  CHECK_THROWS_AS(parse_constraint("p0 p1"), InvalidArgument);
}
