#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/optimize.hpp"

namespace bdp {

/// Runs one subcommand (simulate, probability, estimate, forecast).
/// Returns 0 on success, 1 on a usage error and 2 on a computational failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// Same, with args excluding the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Constraint such as "p0 > p1" or "p[2] <= 0.5" over the full parameter
/// vector. Sides are rate expressions in p; = or == gives an equality.
Constraint parse_constraint(std::string_view text);

}  // namespace bdp
