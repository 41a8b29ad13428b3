#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <span>

#include "bdp/models.hpp"

namespace bdp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Contiguous block of states [z_min, z_max] kept by a truncated generator.
struct TruncationWindow {
  long z_min = 0;
  long z_max = 0;

  std::size_t size() const { return static_cast<std::size_t>(z_max - z_min + 1); }
  bool contains(long z) const { return z >= z_min && z <= z_max; }
  std::size_t index(long z) const { return static_cast<std::size_t>(z - z_min); }
};

/// Default window: 100 states of slack on each side of every state in the query,
/// clipped at zero and at the model's state bound when it has one.
TruncationWindow default_window(std::span<const long> states, long margin = 100);
TruncationWindow default_window(std::initializer_list<long> states, long margin = 100);

/// Clips a window to the model's finite state space (no-op for unbounded models).
TruncationWindow clip_window(TruncationWindow w, const Model& model, ParamView p);

/// Tridiagonal generator over a window. Outward rates at the window edges are
/// dropped so every row sums to zero.
struct GeneratorMatrix {
  TruncationWindow window;
  Matrix q;
};

GeneratorMatrix build_generator(const Model& model, ParamView p, TruncationWindow window);

/// Largest dimension accepted by the dense kernels.
inline constexpr std::size_t kMaxDenseStates = 20000;

/// Matrix exponential by scaling and squaring with a Pade approximant of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
Matrix expm(const Matrix& a);

/// Upper-right block of exp([[Q, E], [0, Q]] t), i.e.
/// the integral over s in [0, t] of exp(Qs) E exp(Q(t - s)).
Matrix van_loan_block(const Matrix& q, const Matrix& e, double t);

/// van_loan_block with E = e_a e_b^T, with a and b given as states in the window.
Matrix van_loan_integral(const GeneratorMatrix& g, long a, long b, double t);

}  // namespace bdp
