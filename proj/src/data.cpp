#include "bdp/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "bdp/errors.hpp"

namespace bdp {

Scheme parse_scheme(std::string_view label) {
  if (label == "discrete") return Scheme::Discrete;
  if (label == "continuous") return Scheme::Continuous;
  throw InvalidArgument("unknown scheme '" + std::string(label) +
                        "' (expected discrete or continuous)");
}

std::string to_string(Scheme s) { return s == Scheme::Discrete ? "discrete" : "continuous"; }

void ObservedData::validate() const {
  if (t_data.empty()) throw InvalidArgument("no sample paths");
  if (t_data.size() != p_data.size()) {
    throw InvalidArgument("t_data and p_data hold different numbers of paths");
  }
  for (std::size_t k = 0; k < t_data.size(); ++k) {
    const auto& t = t_data[k];
    const auto& z = p_data[k];
    const std::string where = "path " + std::to_string(k);
    if (t.size() != z.size()) throw InvalidArgument(where + ": times and counts differ in length");
    if (t.size() < 2) throw InvalidArgument(where + ": at least two observations are required");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i])) throw InvalidArgument(where + ": non-finite time");
      if (z[i] < 0) throw InvalidArgument(where + ": negative count");
      if (i > 0 && !(t[i] > t[i - 1])) {
        throw InvalidArgument(where + ": times must be strictly increasing");
      }
      if (scheme == Scheme::Continuous && i > 0 && std::abs(z[i] - z[i - 1]) > 1) {
        throw InvalidArgument(where + ": continuous data must change by one at each jump");
      }
    }
  }
}

std::vector<long> ObservedData::all_counts() const {
  std::vector<long> out;
  for (const auto& z : p_data) out.insert(out.end(), z.begin(), z.end());
  return out;
}

long ObservedData::max_count() const {
  long m = 0;
  for (const auto& z : p_data) {
    for (long v : z) m = std::max(m, v);
  }
  return m;
}

std::vector<Transition> transitions(const ObservedData& data) {
  std::vector<Transition> out;
  for (std::size_t k = 0; k < data.t_data.size(); ++k) {
    const auto& t = data.t_data[k];
    const auto& z = data.p_data[k];
    for (std::size_t i = 1; i < t.size(); ++i) out.push_back({z[i - 1], z[i], t[i] - t[i - 1]});
  }
  return out;
}

std::vector<TransitionGroup> group_transitions(const ObservedData& data) {
  std::vector<Transition> all = transitions(data);
  std::stable_sort(all.begin(), all.end(),
                   [](const Transition& a, const Transition& b) { return a.dt < b.dt; });
  std::vector<TransitionGroup> groups;
  std::map<std::pair<long, long>, std::size_t> counts;
  const auto flush = [&](double dt) {
    TransitionGroup g{dt, {}, {}, {}};
    std::set<long> from, to;
    for (const auto& [key, n] : counts) {
      g.entries.push_back({key.first, key.second, n});
      from.insert(key.first);
      to.insert(key.second);
    }
    g.from.assign(from.begin(), from.end());
    g.to.assign(to.begin(), to.end());
    groups.push_back(std::move(g));
    counts.clear();
  };
  double group_dt = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i == 0) {
      group_dt = all[i].dt;
    } else if (all[i].dt - group_dt > 1e-12 * std::max(1.0, std::abs(group_dt))) {
      flush(group_dt);
      group_dt = all[i].dt;
    }
    ++counts[{all[i].z_prev, all[i].z_next}];
  }
  if (!counts.empty()) flush(group_dt);
  return groups;
}

void KnownParams::validate(std::size_t param_count) const {
  if (values.size() != indices.size()) {
    throw InvalidArgument("known parameter values and indices differ in length");
  }
  std::set<std::size_t> seen;
  for (std::size_t idx : indices) {
    if (idx >= param_count) {
      throw InvalidArgument("known parameter index " + std::to_string(idx) +
                            " is out of range for a model with " + std::to_string(param_count) +
                            " parameters");
    }
    if (!seen.insert(idx).second) {
      throw InvalidArgument("known parameter index " + std::to_string(idx) + " repeated");
    }
  }
  if (seen.size() == param_count && param_count > 0) {
    throw InvalidArgument("every parameter is known; nothing to estimate");
  }
}

std::vector<std::size_t> KnownParams::free_indices(std::size_t param_count) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < param_count; ++i) {
    if (std::find(indices.begin(), indices.end(), i) == indices.end()) out.push_back(i);
  }
  return out;
}

Params KnownParams::expand(std::span<const double> free, std::size_t param_count) const {
  Params full(param_count, 0.0);
  for (std::size_t k = 0; k < indices.size(); ++k) full[indices[k]] = values[k];
  const auto idx = free_indices(param_count);
  if (idx.size() != free.size()) {
    throw InvalidArgument("expected " + std::to_string(idx.size()) + " free parameters, got " +
                          std::to_string(free.size()));
  }
  for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = free[k];
  return full;
}

double SufficientStats::total_up() const { return std::accumulate(u.begin(), u.end(), 0.0); }
double SufficientStats::total_down() const { return std::accumulate(d.begin(), d.end(), 0.0); }
double SufficientStats::total_time() const { return std::accumulate(h.begin(), h.end(), 0.0); }

SufficientStats continuous_stats(const ObservedData& data) {
  const long top = data.max_count();
  SufficientStats s{0, std::vector<double>(static_cast<std::size_t>(top + 1), 0.0),
                    std::vector<double>(static_cast<std::size_t>(top + 1), 0.0),
                    std::vector<double>(static_cast<std::size_t>(top + 1), 0.0)};
  for (std::size_t k = 0; k < data.t_data.size(); ++k) {
    const auto& t = data.t_data[k];
    const auto& z = data.p_data[k];
    for (std::size_t i = 1; i < t.size(); ++i) {
      const auto from = static_cast<std::size_t>(z[i - 1]);
      s.h[from] += t[i] - t[i - 1];
      if (z[i] == z[i - 1] + 1) s.u[from] += 1.0;
      if (z[i] == z[i - 1] - 1) s.d[from] += 1.0;
    }
  }
  return s;
}

double complete_data_loglik(const SufficientStats& s, const Model& model, ParamView p) {
  double total = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double z = static_cast<double>(s.z_min + static_cast<long>(k));
    const double up = model.birth(z, p);
    const double down = model.death(z, p);
    if (s.u[k] > 0.0) {
      if (!(up > 0.0)) return -std::numeric_limits<double>::infinity();
      total += s.u[k] * std::log(up);
    }
    if (s.d[k] > 0.0) {
      if (!(down > 0.0)) return -std::numeric_limits<double>::infinity();
      total += s.d[k] * std::log(down);
    }
    total -= (up + down) * s.h[k];
  }
  return total;
}

}  // namespace bdp
