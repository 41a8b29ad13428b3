#include "bdp/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "bdp/errors.hpp"

namespace bdp {

TruncationWindow default_window(std::span<const long> states, long margin) {
  if (states.empty()) throw InvalidArgument("cannot build a window from no states");
  const auto [lo, hi] = std::minmax_element(states.begin(), states.end());
  if (*lo < 0) throw InvalidArgument("states must be non-negative");
  return {std::max(0L, *lo - margin), *hi + margin};
}

TruncationWindow default_window(std::initializer_list<long> states, long margin) {
  return default_window(std::span<const long>(states.begin(), states.size()), margin);
}

TruncationWindow clip_window(TruncationWindow w, const Model& model, ParamView p) {
  if (auto bound = model.state_bound(p)) {
    w.z_max = std::min(w.z_max, *bound);
    w.z_min = std::min(w.z_min, w.z_max);
  }
  return w;
}

GeneratorMatrix build_generator(const Model& model, ParamView p, TruncationWindow window) {
  if (window.z_min < 0 || window.z_max < window.z_min) {
    throw InvalidArgument("invalid truncation window [" + std::to_string(window.z_min) + ", " +
                          std::to_string(window.z_max) + "]");
  }
  const std::size_t n = window.size();
  if (n > kMaxDenseStates) {
    throw InvalidArgument("truncation window of " + std::to_string(n) +
                          " states exceeds the dense limit of " +
                          std::to_string(kMaxDenseStates));
  }
  GeneratorMatrix g{window, Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
  for (std::size_t r = 0; r < n; ++r) {
    const long z = window.z_min + static_cast<long>(r);
    const double zz = static_cast<double>(z);
    const double up = z < window.z_max ? model.birth(zz, p) : 0.0;
    const double down = z > window.z_min ? model.death(zz, p) : 0.0;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw ComputationError("non-finite rate at state " + std::to_string(z));
    }
    const auto i = static_cast<Eigen::Index>(r);
    if (up > 0.0) g.q(i, i + 1) = up;
    if (down > 0.0) g.q(i, i - 1) = down;
    g.q(i, i) = -(up + down);
  }
  return g;
}

namespace {

constexpr std::array<double, 4> kTheta = {1.495585217958292e-2, 2.539398330063230e-1,
                                          9.504178996162932e-1, 2.097847961257068e0};
constexpr double kTheta13 = 5.371920351148152e0;

double norm1(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

Matrix solve_pade(const Matrix& u, const Matrix& v) {
  return (v - u).partialPivLu().solve(v + u);
}

Matrix pade_low(const Matrix& a, int m) {
  static const double b3[] = {120.0, 60.0, 12.0, 1.0};
  static const double b5[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
  static const double b7[] = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                              25200.0,    1512.0,    56.0,      1.0};
  static const double b9[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                              30270240.0,    2162160.0,    110880.0,     3960.0,
                              90.0,          1.0};
  const double* b = m == 3 ? b3 : m == 5 ? b5 : m == 7 ? b7 : b9;
  const Eigen::Index n = a.rows();
  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  Matrix odd = b[1] * ident;
  Matrix even = b[0] * ident;
  Matrix power = ident;
  for (int k = 2; k <= m; k += 2) {
    power = power * a2;
    even += b[k] * power;
    odd += b[k + 1] * power;
  }
  const Matrix u = a * odd;
  return solve_pade(u, even);
}

Matrix pade13(const Matrix& a) {
  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                             1187353796428800.0,  129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,       1323241920.0,
                             40840800.0,          960960.0,            16380.0,
                             182.0,               1.0};
  const Eigen::Index n = a.rows();
  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                        b[3] * a2 + b[1] * ident);
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                   b[2] * a2 + b[0] * ident;
  return solve_pade(u, v);
}

}  // namespace

Matrix expm(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("expm requires a square matrix");
  if (static_cast<std::size_t>(a.rows()) > 2 * kMaxDenseStates) {
    throw InvalidArgument("matrix of dimension " + std::to_string(a.rows()) +
                          " is too large for dense expm");
  }
  if (!a.allFinite()) throw ComputationError("expm of a non-finite matrix");
  if (a.size() == 0) return a;
  const double nrm = norm1(a);
  static const int degrees[] = {3, 5, 7, 9};
  for (int i = 0; i < 4; ++i) {
    if (nrm <= kTheta[static_cast<std::size_t>(i)]) return pade_low(a, degrees[i]);
  }
  const int s = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / kTheta13))));
  Matrix x = pade13(a / std::ldexp(1.0, s));
  for (int i = 0; i < s; ++i) x = x * x;
  return x;
}

Matrix van_loan_block(const Matrix& q, const Matrix& e, double t) {
  if (q.rows() != q.cols() || e.rows() != q.rows() || e.cols() != q.cols()) {
    throw InvalidArgument("van_loan_block: Q and E must be square and of equal size");
  }
  const Eigen::Index n = q.rows();
  Matrix c = Matrix::Zero(2 * n, 2 * n);
  c.topLeftCorner(n, n) = q * t;
  c.topRightCorner(n, n) = e * t;
  c.bottomRightCorner(n, n) = q * t;
  const Matrix ec = expm(c);
  return ec.topRightCorner(n, n);
}

Matrix van_loan_integral(const GeneratorMatrix& g, long a, long b, double t) {
  if (!g.window.contains(a) || !g.window.contains(b)) {
    throw InvalidArgument("van_loan_integral: states outside the truncation window");
  }
  if (!(t > 0.0)) throw InvalidArgument("van_loan_integral: t must be positive");
  const Eigen::Index n = g.q.rows();
  Matrix e = Matrix::Zero(n, n);
  e(static_cast<Eigen::Index>(g.window.index(a)), static_cast<Eigen::Index>(g.window.index(b))) = 1.0;
  return van_loan_block(g.q, e, t);
}

}  // namespace bdp
