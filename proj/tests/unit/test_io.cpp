#include <doctest.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "bdp/errors.hpp"
#include "bdp/io.hpp"

using namespace bdp;

namespace {

ObservedData parse(const std::string& text, Scheme scheme = Scheme::Discrete) {
  std::istringstream in(text);
  return parse_observations(in, scheme);
}

std::string data_dir() {
  const char* dir = std::getenv("BDPKIT_DATA");
  return dir ? dir : "data";
}

}  // namespace

TEST_CASE("two-row file") {
  const auto d = parse("path_id,time,count\n7,0.5,3\n7,1.5,4\n");
  REQUIRE(d.t_data.size() == 1);
  CHECK(d.t_data[0] == std::vector<double>{0.5, 1.5});
  CHECK(d.p_data[0] == std::vector<long>{3, 4});
  CHECK(d.scheme == Scheme::Discrete);
}

TEST_CASE("column order, extra columns and path order") {
  const auto d = parse("count,note,time,path_id\n5,x,0,b\n1,y,0,a\n6,z,1,b\n2,w,2,a\n");
  REQUIRE(d.t_data.size() == 2);
  CHECK(d.p_data[0] == std::vector<long>{5, 6});  // b appears first
  CHECK(d.p_data[1] == std::vector<long>{1, 2});
  CHECK(d.t_data[1] == std::vector<double>{0, 2});
}

TEST_CASE("malformed inputs") {
  const auto throws_with = [](const std::string& text, const std::string& needle,
                              Scheme scheme = Scheme::Discrete) {
    try {
      parse(text, scheme);
      FAIL("expected an error for: " << text);
    } catch (const InvalidArgument& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  throws_with("path_id,time\n1,0\n", "missing column 'count'");
  throws_with("path_id,time,count\n1,0,3\n1,0,4\n", "duplicate");
  throws_with("path_id,time,count\n1,1,3\n1,0,4\n", "not increasing");
  throws_with("path_id,time,count\n1,0,3\n1,1,-4\n", "negative");
  throws_with("path_id,time,count\n1,0,3\n1,1,x\n", "integer");
  throws_with("path_id,time,count\n1,0,3\n", "fewer than two");
  throws_with("", "empty");
  throws_with("path_id,time,count\n1,0,3\n1,1,5\n", "at most one", Scheme::Continuous);
}

TEST_CASE("robin dataset") {
  const auto d = read_observations(data_dir() + "/robin.csv");
  REQUIRE(d.t_data.size() == 1);
  CHECK(d.t_data[0].size() == 16);
  CHECK(d.t_data[0].front() == 1989);
  CHECK(d.t_data[0].back() == 2015);
  CHECK(d.p_data[0].front() == 30);
  CHECK(d.p_data[0].back() == 118);
  CHECK(read_observations(data_dir() + "/crane.csv").t_data[0].size() == 72);
}

TEST_CASE("result JSON round trip is exact") {
  EstimationResult r;
  r.p = {0.1 + 0.2, 1.0 / 3.0, 0.0};
  r.capacity = 146;
  r.val = -123.456789012345678;
  Matrix cov(2, 2);
  cov << 1e-3 / 7.0, -2e-5, -2e-5, std::nextafter(1.0, 2.0);
  r.cov = cov;
  r.se = {std::sqrt(cov(0, 0)), std::numeric_limits<double>::quiet_NaN()};
  r.estimated = {0, 1};
  r.cov_source = "asymptotic";
  r.compute_time = 0.125;
  r.framework = "dnm";
  r.scheme = "discrete";
  r.method = "expm";
  r.p0 = {0.5, 0.3};
  r.message = "converged";
  r.success = true;
  r.iterations = {{0.5, 0.3, 0.0}, {0.3, 1.0 / 3.0, 0.0}};
  r.samples = {{1e-300, 5e300, -0.0}};
  r.warnings = {"a warning"};

  const std::string text = result_json(r, {"gamma", "nu", "alpha"});
  const auto back = parse_result_json(text);
  CHECK(back.p == r.p);
  CHECK(back.capacity == r.capacity);
  CHECK(back.val == r.val);
  REQUIRE(back.cov);
  CHECK(*back.cov == cov);
  CHECK(back.se[0] == r.se[0]);
  CHECK(std::isnan(back.se[1]));  // written as null
  CHECK(back.estimated == r.estimated);
  CHECK(back.cov_source == r.cov_source);
  CHECK(back.compute_time == r.compute_time);
  CHECK(back.framework == r.framework);
  CHECK(back.p0 == r.p0);
  CHECK(back.success);
  CHECK(back.iterations == r.iterations);
  CHECK(back.samples == r.samples);
  CHECK(back.warnings == r.warnings);
  CHECK(text.find("\"schema\": 1") != std::string::npos);
  CHECK(text.find("\"gamma\"") != std::string::npos);
  CHECK(result_json(back, {"gamma", "nu", "alpha"}) == text);

  CHECK_THROWS_AS(parse_result_json("{\"schema\": 2}"), InvalidArgument);
  CHECK_THROWS_AS(parse_result_json("{not json"), InvalidArgument);
}

TEST_CASE("property: format_real round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 2.5e-310, 1e300, -7.0, 146.0, std::nextafter(0.3, 1.0)}) {
    const std::string text = format_real(v);
    double back = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), back);
    CHECK(back == v);
  }
  CHECK(format_real(146.0) == "146");
}

TEST_CASE("bands and ellipse CSV") {
  ForecastBands b;
  b.times = {2015, 2016};
  b.percentiles = {2.5, 50, 97.5};
  b.values.resize(2, 3);
  b.values << 110, 118, 126, 111.5, 121, 130;
  const std::string csv = bands_csv(b);
  CHECK(csv == "time,p2.5,p50,p97.5\n2015,110,118,126\n2016,111.5,121,130\n");

  const std::vector<double> levels{0.95};
  const std::vector<Polyline> lines{{{1.0, 2.0}, {3.0, 4.5}}};
  CHECK(ellipses_csv(levels, lines) == "level,x,y\n0.95,1,2\n0.95,3,4.5\n");
}

TEST_CASE("atomic writes and matrix JSON") {
  const auto dir = std::filesystem::temp_directory_path() / "bdp_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "cov.json").string();
  write_file_atomic(path, "[[1, 0.5], [0.5, 2]]");
  const Matrix m = read_matrix_json(path);
  CHECK(m(0, 1) == 0.5);
  CHECK(m(1, 1) == 2.0);

  EstimationResult r;
  r.p = {1, 2};
  r.cov = Matrix::Identity(2, 2);
  write_result(r, path);
  CHECK(read_matrix_json(path) == Matrix::Identity(2, 2));

  write_file_atomic(path, "[[1, 2, 3]]");
  CHECK_THROWS_AS(read_matrix_json(path), InvalidArgument);
  CHECK_THROWS_AS(read_matrix_json((dir / "missing.json").string()), InvalidArgument);
  std::filesystem::remove_all(dir);
}
