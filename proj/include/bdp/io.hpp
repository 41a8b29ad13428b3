#pragma once

#include <array>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/data.hpp"
#include "bdp/estimate.hpp"
#include "bdp/uncertainty.hpp"

namespace bdp {

/// CSV with header columns path_id, time, count (any order, extra columns
/// ignored). Paths keep the order in which their ids first appear.
ObservedData read_observations(const std::string& path, Scheme scheme = Scheme::Discrete);
ObservedData parse_observations(std::istream& in, Scheme scheme,
                                const std::string& source = "<input>");

/// Writes via a temporary file in the same directory and a rename.
void write_file_atomic(const std::string& path, std::string_view contents);

/// Versioned JSON ("schema": 1). Non-finite reals are written as null.
std::string result_json(const EstimationResult& res, const std::vector<std::string>& names = {});
EstimationResult parse_result_json(std::string_view text);
void write_result(const EstimationResult& res, const std::string& path,
                  const std::vector<std::string>& names = {});

/// Header time,p0,p2.5,... then one row per time.
std::string bands_csv(const ForecastBands& bands);
void write_bands(const ForecastBands& bands, const std::string& path);

/// Rows level,x,y for each vertex of each polyline.
std::string ellipses_csv(std::span<const double> levels, const std::vector<Polyline>& lines);

/// Square matrix from a JSON file holding either a nested array or an object
/// with a "cov" member (as written by write_result).
Matrix read_matrix_json(const std::string& path);

/// Number formatted so that parsing it back gives the same double.
std::string format_real(double v);

}  // namespace bdp
