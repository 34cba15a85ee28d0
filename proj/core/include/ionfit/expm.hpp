#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>

namespace ionfit {

namespace detail {

// Pade coefficients b_0 .. b_m for the [m/m] approximant of exp.
inline constexpr double kPade3[] = {120.0, 60.0, 12.0, 1.0};
inline constexpr double kPade5[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
inline constexpr double kPade7[] = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                    25200.0,    1512.0,    56.0,      1.0};
inline constexpr double kPade9[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                                    2162160.0,     110880.0,     3960.0,       90.0,        1.0};
inline constexpr double kPade13[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                     1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                     670442572800.0,      33522128640.0,       1323241920.0,
                                     40840800.0,          960960.0,            16380.0,
                                     182.0,               1.0};

// 1-norm thresholds below which the [m/m] approximant is accurate to unit roundoff.
inline constexpr double kTheta3 = 1.495585217958292e-2;
inline constexpr double kTheta5 = 2.539398330063230e-1;
inline constexpr double kTheta7 = 9.504178996162932e-1;
inline constexpr double kTheta9 = 2.097847961257068e0;
inline constexpr double kTheta13 = 5.371920351148152e0;

template <typename M, std::size_t N>
void pade_low(const M& a, const double (&b)[N], M& u, M& v) {
  const M id = M::Identity(a.rows(), a.cols());
  const M a2 = a * a;
  M odd = b[1] * id;
  M even = b[0] * id;
  M power = id;
  for (std::size_t k = 2; k < N; k += 2) {
    power = power * a2;
    even += b[k] * power;
    if (k + 1 < N) odd += b[k + 1] * power;
  }
  u.noalias() = a * odd;
  v = even;
}

template <typename M>
void pade13(const M& a, M& u, M& v) {
  const auto& b = kPade13;
  const M id = M::Identity(a.rows(), a.cols());
  const M a2 = a * a;
  const M a4 = a2 * a2;
  const M a6 = a4 * a2;
  M tmp = b[13] * a6 + b[11] * a4 + b[9] * a2;
  M inner = a6 * tmp;
  inner += b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
  u.noalias() = a * inner;
  tmp = b[12] * a6 + b[10] * a4 + b[8] * a2;
  v = a6 * tmp;
  v += b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

}  // namespace detail

/// Matrix exponential by scaling and squaring with a degree-selected Pade
/// approximant (Higham 2005 thresholds). Works for fixed and dynamic sizes.
template <typename Derived>
typename Derived::PlainObject expm(const Eigen::MatrixBase<Derived>& input) {
  using M = typename Derived::PlainObject;
  M a = input;
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  M u(a.rows(), a.cols());
  M v(a.rows(), a.cols());
  int squarings = 0;

  if (norm <= detail::kTheta3) {
    detail::pade_low(a, detail::kPade3, u, v);
  } else if (norm <= detail::kTheta5) {
    detail::pade_low(a, detail::kPade5, u, v);
  } else if (norm <= detail::kTheta7) {
    detail::pade_low(a, detail::kPade7, u, v);
  } else if (norm <= detail::kTheta9) {
    detail::pade_low(a, detail::kPade9, u, v);
  } else {
    if (norm > detail::kTheta13) {
      squarings = static_cast<int>(std::ceil(std::log2(norm / detail::kTheta13)));
      a *= std::ldexp(1.0, -squarings);
    }
    detail::pade13(a, u, v);
  }

  M result = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

}  // namespace ionfit
