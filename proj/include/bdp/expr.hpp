#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "bdp/models.hpp"

namespace bdp {

/// A parsed rate expression over the state `z` and parameters `p[i]`.
///
/// Grammar: arithmetic (+ - * / ^), comparisons (< <= > >=, yielding 0 or 1),
/// parentheses, numeric literals, and the functions exp, log, sqrt, abs,
/// pow(a, b), min(a, b), max(a, b). Parameters are written `p[0]` or `p0`.
class RateExpression {
 public:
  static RateExpression parse(std::string_view text);

  double operator()(double z, ParamView p) const;

  /// One past the largest parameter index referenced (0 when none is used).
  std::size_t param_count() const { return param_count_; }
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::size_t param_count_ = 0;
  std::string text_;
};

/// Builds a custom model from two rate expressions.
Model expression_model(const std::string& birth, const std::string& death,
                       std::size_t param_count);

}  // namespace bdp
