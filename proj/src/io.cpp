#include "bdp/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "bdp/errors.hpp"

namespace bdp {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double real_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(real(m(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from(const json& j) {
  if (!j.is_array()) throw InvalidArgument("matrix must be a JSON array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      throw InvalidArgument("matrix must be square");
    }
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = real_from(row[static_cast<std::size_t>(k)]);
  }
  return m;
}

json reals(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(real(x));
  return a;
}

std::vector<double> reals_from(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(real_from(x));
  return out;
}

}  // namespace

std::string format_real(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

ObservedData parse_observations(std::istream& in, Scheme scheme, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& msg) {
    throw InvalidArgument(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_csv(line);
      break;
    }
  }
  if (header.empty()) throw InvalidArgument(source + ": empty file");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"path_id", "time", "count"}) {
    if (!col.count(name)) fail(std::string("missing column '") + name + "'");
  }
  const std::size_t c_path = col["path_id"], c_time = col["time"], c_count = col["count"];
  const std::size_t need = std::max({c_path, c_time, c_count}) + 1;

  ObservedData data;
  data.scheme = scheme;
  std::map<std::string, std::size_t> path_index;
  std::set<std::pair<std::string, double>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() < need) fail("expected at least " + std::to_string(need) + " columns");
    const std::string& id = cells[c_path];
    if (id.empty()) fail("empty path_id");
    double t;
    long z;
    if (!parse_number(cells[c_time], t) || !std::isfinite(t)) fail("time is not a finite number");
    if (!parse_number(cells[c_count], z)) fail("count is not an integer");
    if (z < 0) fail("negative count");
    if (!seen.insert({id, t}).second) fail("duplicate (path_id, time) row");
    auto [it, fresh] = path_index.try_emplace(id, data.t_data.size());
    if (fresh) {
      data.t_data.emplace_back();
      data.p_data.emplace_back();
    }
    auto& times = data.t_data[it->second];
    if (!times.empty() && !(t > times.back())) {
      fail("times of path '" + id + "' are not increasing");
    }
    times.push_back(t);
    data.p_data[it->second].push_back(z);
    if (scheme == Scheme::Continuous && data.p_data[it->second].size() > 1) {
      const auto& zs = data.p_data[it->second];
      if (std::abs(zs[zs.size() - 1] - zs[zs.size() - 2]) > 1) {
        fail("continuously observed counts must change by at most one per row");
      }
    }
  }
  if (data.t_data.empty()) throw InvalidArgument(source + ": no observations");
  for (const auto& [id, k] : path_index) {
    if (data.t_data[k].size() < 2) {
      throw InvalidArgument(source + ": path '" + id + "' has fewer than two observations");
    }
  }
  return data;
}

ObservedData read_observations(const std::string& path, Scheme scheme) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open data file '" + path + "'");
  return parse_observations(in, scheme, path);
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move output into place at '" + path + "': " + ec.message());
  }
}

std::string result_json(const EstimationResult& res, const std::vector<std::string>& names) {
  json j;
  j["schema"] = 1;
  j["p"] = reals(res.p);
  if (!names.empty()) j["param_names"] = names;
  j["capacity"] = res.capacity ? json(*res.capacity) : json(nullptr);
  j["val"] = real(res.val);
  j["cov"] = res.cov ? matrix_json(*res.cov) : json(nullptr);
  j["se"] = reals(res.se);
  j["estimated"] = res.estimated;
  j["cov_source"] = res.cov_source;
  j["compute_time"] = res.compute_time;
  j["framework"] = res.framework;
  j["scheme"] = res.scheme;
  j["method"] = res.method;
  j["p0"] = reals(res.p0);
  j["message"] = res.message;
  j["success"] = res.success;
  json iters = json::array();
  for (const auto& p : res.iterations) iters.push_back(reals(p));
  j["iterations"] = std::move(iters);
  json samples = json::array();
  for (const auto& p : res.samples) samples.push_back(reals(p));
  j["samples"] = std::move(samples);
  j["warnings"] = res.warnings;
  return j.dump(2) + "\n";
}

EstimationResult parse_result_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed result JSON: ") + e.what());
  }
  if (!j.contains("schema") || j["schema"] != 1) {
    throw InvalidArgument("unsupported result schema");
  }
  EstimationResult r;
  r.p = reals_from(j.at("p"));
  if (!j.at("capacity").is_null()) r.capacity = j["capacity"].get<long>();
  r.val = real_from(j.at("val"));
  if (!j.at("cov").is_null()) r.cov = matrix_from(j["cov"]);
  r.se = reals_from(j.at("se"));
  r.estimated = j.at("estimated").get<std::vector<std::size_t>>();
  r.cov_source = j.at("cov_source").get<std::string>();
  r.compute_time = j.at("compute_time").get<double>();
  r.framework = j.at("framework").get<std::string>();
  r.scheme = j.at("scheme").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.p0 = reals_from(j.at("p0"));
  r.message = j.at("message").get<std::string>();
  r.success = j.at("success").get<bool>();
  for (const auto& p : j.at("iterations")) r.iterations.push_back(reals_from(p));
  for (const auto& p : j.at("samples")) r.samples.push_back(reals_from(p));
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

void write_result(const EstimationResult& res, const std::string& path,
                  const std::vector<std::string>& names) {
  write_file_atomic(path, result_json(res, names));
}

std::string bands_csv(const ForecastBands& bands) {
  std::ostringstream os;
  os << "time";
  for (double q : bands.percentiles) os << ",p" << format_real(q);
  os << '\n';
  for (std::size_t t = 0; t < bands.times.size(); ++t) {
    os << format_real(bands.times[t]);
    for (Eigen::Index q = 0; q < bands.values.cols(); ++q) {
      os << ',' << format_real(bands.values(static_cast<Eigen::Index>(t), q));
    }
    os << '\n';
  }
  return os.str();
}

void write_bands(const ForecastBands& bands, const std::string& path) {
  write_file_atomic(path, bands_csv(bands));
}

std::string ellipses_csv(std::span<const double> levels, const std::vector<Polyline>& lines) {
  std::ostringstream os;
  os << "level,x,y\n";
  for (std::size_t l = 0; l < lines.size(); ++l) {
    for (const auto& [x, y] : lines[l]) {
      os << format_real(levels[l]) << ',' << format_real(x) << ',' << format_real(y) << '\n';
    }
  }
  return os.str();
}

Matrix read_matrix_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("malformed JSON in '" + path + "': " + e.what());
  }
  if (j.is_object()) {
    if (!j.contains("cov") || j["cov"].is_null()) {
      throw InvalidArgument("'" + path + "' has no covariance matrix");
    }
    return matrix_from(j["cov"]);
  }
  return matrix_from(j);
}

}  // namespace bdp
