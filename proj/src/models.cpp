#include "bdp/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "bdp/errors.hpp"

namespace bdp {

namespace {

double clamp_rate(double r) { return r < 0.0 ? 0.0 : r; }  // NaN passes through

long round_param(double v) { return std::lround(v); }

using Rates = std::pair<RateFn, RateFn>;

RateFactorization linear_factorization(std::optional<std::size_t> bi,
                                       std::optional<std::size_t> di,
                                       std::function<double(double)> f,
                                       std::function<double(double)> g) {
  return RateFactorization{bi, di, std::move(f), std::move(g)};
}

double identity_shape(double z) { return z; }
double unit_shape(double) { return 1.0; }
double busy_shape(double z) { return z > 0.0 ? 1.0 : 0.0; }

}  // namespace

Model::Model(std::string label, RateFn birth, RateFn death, std::size_t param_count)
    : label_(std::move(label)),
      birth_(std::move(birth)),
      death_(std::move(death)),
      param_count_(param_count) {
  for (std::size_t i = 0; i < param_count_; ++i) param_names_.push_back("p" + std::to_string(i));
}

double Model::birth(double z, ParamView p) const {
  return clamp_rate(birth_(std::max(z, 0.0), p));
}

double Model::death(double z, ParamView p) const {
  if (z <= 0.0) return 0.0;
  return clamp_rate(death_(z, p));
}

std::optional<long> Model::state_bound(ParamView p) const {
  if (!state_bound_) return std::nullopt;
  return state_bound_(p);
}

void Model::check_params(ParamView p) const {
  if (p.size() != param_count_) {
    std::ostringstream os;
    os << "model '" << label_ << "' expects " << param_count_ << " parameters, got "
       << p.size();
    throw InvalidArgument(os.str());
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i])) {
      throw InvalidArgument("parameter " + std::to_string(i) + " of model '" + label_ +
                            "' is not finite");
    }
  }
}

Model& Model::with_state_bound(std::function<std::optional<long>(ParamView)> bound) {
  state_bound_ = std::move(bound);
  return *this;
}

Model& Model::with_factorization(RateFactorization f) {
  factorization_ = std::move(f);
  return *this;
}

Model& Model::with_param_names(std::vector<std::string> names) {
  param_names_ = std::move(names);
  return *this;
}

const std::vector<std::string>& builtin_labels() {
  static const std::vector<std::string> labels = {
      "linear", "linear-migration", "pure-birth", "pure-death", "Poisson",
      "Verhulst", "Ricker", "Hassell", "MS-S", "Moran",
      "M/M/1", "M/M/inf", "loss-system"};
  return labels;
}

Model builtin_model(const std::string& label) {
  if (label == "linear") {
    return Model(label, [](double z, ParamView p) { return p[0] * z; },
                 [](double z, ParamView p) { return p[1] * z; }, 2)
        .with_param_names({"gamma", "nu"})
        .with_factorization(linear_factorization(0, 1, identity_shape, identity_shape));
  }
  if (label == "linear-migration") {
    return Model(label, [](double z, ParamView p) { return p[0] * z + p[2]; },
                 [](double z, ParamView p) { return p[1] * z; }, 3)
        .with_param_names({"gamma", "nu", "alpha"});
  }
  if (label == "pure-birth") {
    return Model(label, [](double z, ParamView p) { return p[0] * z; },
                 [](double, ParamView) { return 0.0; }, 1)
        .with_param_names({"gamma"})
        .with_factorization(linear_factorization(0, std::nullopt, identity_shape, nullptr));
  }
  if (label == "pure-death") {
    return Model(label, [](double, ParamView) { return 0.0; },
                 [](double z, ParamView p) { return p[0] * z; }, 1)
        .with_param_names({"nu"})
        .with_factorization(linear_factorization(std::nullopt, 0, nullptr, identity_shape));
  }
  if (label == "Poisson") {
    return Model(label, [](double, ParamView p) { return p[0]; },
                 [](double, ParamView) { return 0.0; }, 1)
        .with_param_names({"gamma"})
        .with_factorization(linear_factorization(0, std::nullopt, unit_shape, nullptr));
  }
  if (label == "Verhulst") {
    return Model(label, [](double z, ParamView p) { return p[0] * (1.0 - p[2] * z) * z; },
                 [](double z, ParamView p) { return p[1] * (1.0 + p[3] * z) * z; }, 4)
        .with_param_names({"gamma", "nu", "alpha", "beta"});
  }
  if (label == "Ricker") {
    return Model(label,
                 [](double z, ParamView p) {
                   return p[0] * z * std::exp(-std::pow(p[2] * z, p[3]));
                 },
                 [](double z, ParamView p) { return p[1] * z; }, 4)
        .with_param_names({"gamma", "nu", "alpha", "c"});
  }
  if (label == "Hassell") {
    return Model(label,
                 [](double z, ParamView p) {
                   return p[0] * z / std::pow(1.0 + p[2] * z, p[3]);
                 },
                 [](double z, ParamView p) { return p[1] * z; }, 4)
        .with_param_names({"gamma", "nu", "alpha", "c"});
  }
  if (label == "MS-S") {
    return Model(label,
                 [](double z, ParamView p) {
                   return p[0] * z / (1.0 + std::pow(p[2] * z, p[3]));
                 },
                 [](double z, ParamView p) { return p[1] * z; }, 4)
        .with_param_names({"gamma", "nu", "alpha", "c"});
  }
  if (label == "Moran") {
    // p = (alpha, beta, u, v, N); N is stored as a real and rounded here.
    auto birth = [](double z, ParamView p) {
      const double n = static_cast<double>(round_param(p[4]));
      if (n <= 0.0) return 0.0;
      return (n - z) / n * ((p[0] * z * (1.0 - p[2]) + p[1] * (n - z) * p[3]) / n);
    };
    auto death = [](double z, ParamView p) {
      const double n = static_cast<double>(round_param(p[4]));
      if (n <= 0.0) return 0.0;
      return z / n * ((p[1] * (n - z) * (1.0 - p[3]) + p[0] * z * p[2]) / n);
    };
    return Model(label, birth, death, 5)
        .with_param_names({"alpha", "beta", "u", "v", "N"})
        .with_state_bound([](ParamView p) -> std::optional<long> {
          return std::max(0L, round_param(p[4]));
        });
  }
  if (label == "M/M/1") {
    return Model(label, [](double, ParamView p) { return p[0]; },
                 [](double z, ParamView p) { return z > 0.0 ? p[1] : 0.0; }, 2)
        .with_param_names({"gamma", "nu"})
        .with_factorization(linear_factorization(0, 1, unit_shape, busy_shape));
  }
  if (label == "M/M/inf") {
    return Model(label, [](double, ParamView p) { return p[0]; },
                 [](double z, ParamView p) { return p[1] * z; }, 2)
        .with_param_names({"gamma", "nu"})
        .with_factorization(linear_factorization(0, 1, unit_shape, identity_shape));
  }
  if (label == "loss-system") {
    return Model(label,
                 [](double z, ParamView p) {
                   return z < static_cast<double>(round_param(p[2])) ? p[0] : 0.0;
                 },
                 [](double z, ParamView p) { return p[1] * z; }, 3)
        .with_param_names({"gamma", "nu", "c"});
  }
  std::ostringstream os;
  os << "unknown model '" << label << "'; valid labels:";
  for (const auto& l : builtin_labels()) os << " " << l;
  throw InvalidArgument(os.str());
}

Model custom_model(RateFn birth, RateFn death, std::size_t param_count, std::string label) {
  if (!birth || !death) throw InvalidArgument("custom model requires both rate functions");
  return Model(std::move(label), std::move(birth), std::move(death), param_count);
}

double net_growth_slope(const Model& model, ParamView p, double z) {
  const double h = 1e-4 * std::max(1.0, std::abs(z));
  auto g = [&](double x) { return model.birth(x, p) - model.death(x, p); };
  if (z - h < 0.0) return (g(z + h) - g(z)) / h;
  return (g(z + h) - g(z - h)) / (2.0 * h);
}

namespace {

// Sign-change scan at integer steps followed by bisection to 1e-6.
std::vector<double> scan_roots(const Model& model, ParamView p, double z_upper,
                               bool first_positive_only) {
  auto g = [&](double x) { return model.birth(x, p) - model.death(x, p); };
  std::vector<double> roots;
  double a = 1e-9;
  double ga = g(a);
  const long last = static_cast<long>(std::floor(z_upper));
  for (long k = 1; k <= last; ++k) {
    const double b = static_cast<double>(k);
    const double gb = g(b);
    if (gb == 0.0 && ga != 0.0) {
      roots.push_back(b);
    } else if (ga != 0.0 && gb != 0.0 && std::signbit(ga) != std::signbit(gb)) {
      double lo = a, hi = b, glo = ga;
      while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm == 0.0) {
          lo = hi = mid;
          break;
        }
        if (std::signbit(gm) == std::signbit(glo)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    if (first_positive_only && !roots.empty() && std::lround(roots.back()) > 0) break;
    a = b;
    ga = gb;
  }
  return roots;
}

}  // namespace

std::vector<double> rate_balance_roots(const Model& model, ParamView p, double z_upper) {
  model.check_params(p);
  return scan_roots(model, p, z_upper, false);
}

std::optional<long> carrying_capacity(const Model& model, ParamView p, double z_upper) {
  model.check_params(p);
  for (double r : scan_roots(model, p, z_upper, true)) {
    if (std::lround(r) > 0) return std::lround(r);
  }
  return std::nullopt;
}

}  // namespace bdp
