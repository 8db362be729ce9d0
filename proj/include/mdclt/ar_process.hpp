#pragma once

// Stable AR(d) model Y_k = theta^T U_{k-1} + Z_k with state
// U_k = (Y_k, ..., Y_{k-d+1})^T, its companion form U_k = B U_{k-1} + W_k,
// least-squares estimation, the stationary covariance series and the
// coupling between an arbitrary start and the stationary start.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mdclt/error.hpp"
#include "mdclt/innovations.hpp"
#include "mdclt/matrix.hpp"
#include "mdclt/rng.hpp"

namespace mdclt {

inline constexpr double kOverflowLimit = 1e300;

class ArParams {
 public:
  explicit ArParams(Vec theta) : theta_(std::move(theta)) {
    if (theta_.empty() || theta_.size() > kMaxDim)
      throw std::invalid_argument("ArParams: order must be in [1, 16]");
    for (double t : theta_)
      if (!std::isfinite(t)) throw std::invalid_argument("ArParams: non-finite coefficient");
  }

  std::size_t order() const noexcept { return theta_.size(); }
  const Vec& theta() const noexcept { return theta_; }

 private:
  Vec theta_;
};

/// First row theta^T, identity block below the diagonal, zero last column
/// below row one.
inline Mat companion(const ArParams& p) {
  const std::size_t d = p.order();
  Mat b(d);
  for (std::size_t j = 0; j < d; ++j) b(0, j) = p.theta()[j];
  for (std::size_t i = 1; i < d; ++i) b(i, i - 1) = 1.0;
  return b;
}

inline double ar_spectral_radius(const ArParams& p, double tol = 1e-12) {
  return spectral_radius(companion(p), tol);
}

inline void require_stable(const ArParams& p) {
  const double rho = ar_spectral_radius(p);
  if (!(rho < 1.0)) throw Unstable(rho);
}

/// A simulated path. Y, U and Z are all retained.
class ArPath {
 public:
  ArPath() = default;
  ArPath(std::size_t d, Vec y, Vec z) : d_(d), n_(z.size()), y_(std::move(y)), z_(std::move(z)) {
    if (y_.size() != n_ + d_) throw std::invalid_argument("ArPath: y size mismatch");
    u_.resize((n_ + 1) * d_);
    for (std::size_t k = 0; k <= n_; ++k)
      for (std::size_t j = 0; j < d_; ++j) u_[k * d_ + j] = y_[k + d_ - 1 - j];
  }

  std::size_t order() const noexcept { return d_; }
  std::size_t length() const noexcept { return n_; }

  /// Y_k for -d+1 <= k <= n.
  double y(long k) const { return y_.at(static_cast<std::size_t>(k + static_cast<long>(d_) - 1)); }
  /// Z_k for 1 <= k <= n.
  double z(std::size_t k) const { return z_.at(k - 1); }
  /// U_k for 0 <= k <= n.
  std::span<const double> state(std::size_t k) const {
    if (k > n_) throw std::out_of_range("ArPath::state");
    return {u_.data() + k * d_, d_};
  }

  const Vec& ys() const noexcept { return y_; }
  const Vec& zs() const noexcept { return z_; }

  /// Largest relative violation of Y_k = theta^T U_{k-1} + Z_k.
  double recursion_error(const ArParams& p) const {
    double worst = 0.0;
    for (std::size_t k = 1; k <= n_; ++k) {
      const double pred = dot(p.theta(), state(k - 1)) + z(k);
      const double err = std::abs(y(static_cast<long>(k)) - pred) /
                         (1.0 + std::abs(y(static_cast<long>(k))));
      worst = std::max(worst, err);
    }
    return worst;
  }

 private:
  std::size_t d_ = 0;
  std::size_t n_ = 0;
  Vec y_;
  Vec z_;
  Vec u_;
};

/// Runs the recursion from U_0 = u0 with the given innovations Z_1..Z_n.
/// Passing all-zero innovations is the noiseless diagnostic hook.
inline ArPath simulate_from(const ArParams& p, std::span<const double> u0,
                            std::span<const double> z) {
  const std::size_t d = p.order();
  if (u0.size() != d) throw std::invalid_argument("simulate: u0 must have d entries");
  for (double v : u0)
    if (!std::isfinite(v)) throw std::invalid_argument("simulate: non-finite u0");
  const std::size_t n = z.size();
  Vec y(n + d);
  for (std::size_t j = 0; j < d; ++j) y[d - 1 - j] = u0[j];
  const Vec& th = p.theta();
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t idx = k + d - 1;
    double v = z[k - 1];
    for (std::size_t j = 0; j < d; ++j) v += th[j] * y[idx - 1 - j];
    if (!(std::abs(v) <= kOverflowLimit)) throw Overflow(k, v);
    y[idx] = v;
  }
  return ArPath(d, std::move(y), Vec(z.begin(), z.end()));
}

inline ArPath simulate(const ArParams& p, const InnovationSpec& spec,
                       std::span<const double> u0, std::size_t n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");
  Vec z(n);
  for (double& v : z) v = spec.sample(rng);
  return simulate_from(p, u0, z);
}

// ---------------------------------------------------------------------------
// Stationary start

struct StationaryDraw {
  Vec value;          // sum_{j=0}^{J} B^j W_{-j}
  std::size_t terms;  // J
};

/// Truncated moving average whose certified tail bound
/// sum_{j>J} ||B^j||_F E|Z| is below tol. Consumes exactly J + 1 draws.
inline StationaryDraw stationary_initial(const ArParams& p, const InnovationSpec& spec,
                                         double tol, RngStream& rng) {
  if (!(tol > 0.0)) throw std::invalid_argument("stationary_initial: tol must be > 0");
  require_stable(p);
  const Mat b = companion(p);
  detail::PowerNorms f(b);
  const double mean_abs = spec.mean_abs();
  std::size_t J = 0;
  while (f.tail(J, false) * mean_abs >= tol) ++J;

  const std::size_t d = p.order();
  Vec column(d, 0.0);  // B^j e_1
  column[0] = 1.0;
  Vec value(d, 0.0);
  for (std::size_t j = 0; j <= J; ++j) {
    const double zj = spec.sample(rng);
    for (std::size_t i = 0; i < d; ++i) value[i] += column[i] * zj;
    column = b * column;
  }
  return {std::move(value), J};
}

// ---------------------------------------------------------------------------
// Least squares

struct LsResult {
  Vec theta_hat;
  bool gram_pd;
};

/// Running sums of U_{k-1}U_{k-1}^T, U_{k-1}Y_k and U_{k-1}Z_k.
///
/// Rank of Gram is tracked on the regressors themselves with an orthonormal
/// basis of their span. Testing Gram directly squares the conditioning, so a
/// path with Z_1 = 1e-4 would look singular to a Cholesky pivot test.
class LsAccumulator {
 public:
  static constexpr double kSpanTol = 1e-12;

  explicit LsAccumulator(std::size_t d) : gram_(d), uy_(d, 0.0), uz_(d, 0.0) {}

  void add(std::span<const double> u_prev, double y, double z) {
    gram_.add_outer(u_prev, u_prev);
    extend_span(u_prev);
    for (std::size_t i = 0; i < u_prev.size(); ++i) {
      uy_[i] += u_prev[i] * y;
      uz_[i] += u_prev[i] * z;
    }
    ++count_;
  }

  /// Feeds steps count()+1 .. horizon of the path.
  void advance(const ArPath& path, std::size_t horizon) {
    for (std::size_t k = count_ + 1; k <= horizon; ++k)
      add(path.state(k - 1), path.y(static_cast<long>(k)), path.z(k));
  }

  std::size_t count() const noexcept { return count_; }
  std::size_t rank() const noexcept { return basis_.size(); }
  bool full_rank() const noexcept { return basis_.size() == uy_.size(); }
  SymMat gram() const { return SymMat::symmetrize(gram_); }
  const Vec& sum_uy() const noexcept { return uy_; }
  const Vec& sum_uz() const noexcept { return uz_; }

  /// theta_hat = Gram^{-1} sum U_{k-1} Y_k, or the zero vector with
  /// gram_pd = false when Gram is singular. Cholesky first; an ill-conditioned
  /// but full-rank Gram falls back to the spectral inverse.
  LsResult estimate() const {
    const std::size_t d = uy_.size();
    if (!full_rank()) return {Vec(d, 0.0), false};
    const SymMat g = gram();
    if (const auto l = cholesky_pd(g)) return {cholesky_solve(*l, uy_), true};
    const SymMat inv = spectral_apply(sym_eigen(g), [](double l) { return l > 0.0 ? 1.0 / l : 0.0; });
    return {inv.mat() * uy_, true};
  }

 private:
  void extend_span(std::span<const double> u) {
    const std::size_t d = uy_.size();
    if (basis_.size() == d) return;
    double norm_u = 0.0;
    for (double v : u) norm_u += v * v;
    norm_u = std::sqrt(norm_u);
    if (!(norm_u > 0.0)) return;
    Vec r(u.begin(), u.end());
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& q : basis_) {
        double c = 0.0;
        for (std::size_t i = 0; i < d; ++i) c += q[i] * r[i];
        for (std::size_t i = 0; i < d; ++i) r[i] -= c * q[i];
      }
    }
    double norm_r = 0.0;
    for (double v : r) norm_r += v * v;
    norm_r = std::sqrt(norm_r);
    if (!(norm_r > kSpanTol * norm_u)) return;
    for (double& v : r) v /= norm_r;
    basis_.push_back(std::move(r));
  }

  Mat gram_;
  Vec uy_;
  Vec uz_;
  std::vector<Vec> basis_;
  std::size_t count_ = 0;
};

inline SymMat gram(const ArPath& path, std::size_t horizon) {
  LsAccumulator acc(path.order());
  acc.advance(path, horizon);
  return acc.gram();
}
inline SymMat gram(const ArPath& path) { return gram(path, path.length()); }

inline LsResult least_squares(const ArPath& path, std::size_t horizon) {
  LsAccumulator acc(path.order());
  acc.advance(path, horizon);
  return acc.estimate();
}
inline LsResult least_squares(const ArPath& path) {
  return least_squares(path, path.length());
}

/// sqrt(n)(theta_hat - theta); the zero vector when Gram is singular.
inline Vec clt_statistic(const LsAccumulator& acc, const ArParams& p) {
  const LsResult ls = acc.estimate();
  const std::size_t d = p.order();
  if (!ls.gram_pd) return Vec(d, 0.0);
  const double rn = std::sqrt(static_cast<double>(acc.count()));
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = rn * (ls.theta_hat[i] - p.theta()[i]);
  return out;
}

inline Vec clt_statistic(const ArPath& path, const ArParams& p) {
  LsAccumulator acc(path.order());
  acc.advance(path, path.length());
  return clt_statistic(acc, p);
}

/// Gram^{1/2}(theta_hat - theta).
inline Vec self_normalized_statistic(const LsAccumulator& acc, const ArParams& p) {
  const LsResult ls = acc.estimate();
  if (!ls.gram_pd) throw GramSingular();
  const SymMat root = psd_sqrt(acc.gram());
  return root.mat() * (ls.theta_hat - p.theta());
}

inline Vec self_normalized_statistic(const ArPath& path, const ArParams& p) {
  LsAccumulator acc(path.order());
  acc.advance(path, path.length());
  return self_normalized_statistic(acc, p);
}

// ---------------------------------------------------------------------------
// Sigma(theta) = sum_j B^j I~ (B^j)^T

struct SigmaResult {
  SymMat sigma;
  std::size_t terms_used = 0;
  double tail_bound = 0.0;
  SymMat head;  // sum_{j<d} B^j I~ (B^j)^T, positive definite
  double spectral_radius = 0.0;
};

inline SigmaResult sigma_series(const ArParams& p, double tol = 1e-13) {
  if (!(tol > 0.0)) throw std::invalid_argument("sigma_series: tol must be > 0");
  const double rho = ar_spectral_radius(p);
  if (!(rho < 1.0)) throw Unstable(rho);
  const std::size_t d = p.order();
  const Mat b = companion(p);
  detail::PowerNorms f(b);
  std::size_t J = 0;
  while (f.tail(J, true) >= tol) ++J;

  Mat sum(d);
  Mat head(d);
  Vec column(d, 0.0);  // B^j e_1, so B^j I~ (B^j)^T = column column^T
  column[0] = 1.0;
  for (std::size_t j = 0; j <= J; ++j) {
    sum.add_outer(column, column);
    if (j + 1 == d) head = sum;
    column = b * column;
  }
  if (J + 1 < d) {
    // Remaining head terms are needed even when the tail is already certified.
    head = sum;
    for (std::size_t j = J + 1; j < d; ++j) {
      head.add_outer(column, column);
      column = b * column;
    }
  }
  SigmaResult out{SymMat::symmetrize(sum), J, f.tail(J, true), SymMat::symmetrize(head), rho};
  if (!is_positive_definite(out.head))
    throw NotPd("sigma_series: head matrix is not positive definite");
  return out;
}

// ---------------------------------------------------------------------------
// Coupling with the stationary start

struct CoupledPaths {
  ArPath path;        // from the given u0
  ArPath stationary;  // from the stationary draw, same innovations
};

inline CoupledPaths coupled_paths(const ArParams& p, const InnovationSpec& spec,
                                  std::span<const double> u0, std::size_t n,
                                  double tol, RngStream& rng) {
  StationaryDraw bar = stationary_initial(p, spec, tol, rng);
  Vec z(n);
  for (double& v : z) v = spec.sample(rng);
  return {simulate_from(p, u0, z), simulate_from(p, bar.value, z)};
}

struct CouplingGaps {
  double gram_gap;  // ||(1/n) sum U U^T - (1/n) sum Ubar Ubar^T||_F
  double sum_gap;   // ||n^{-1/2} sum (U_{k-1} - Ubar_{k-1}) Z_k||_2
};

inline CouplingGaps coupling_gaps(const CoupledPaths& pair, std::size_t horizon) {
  const std::size_t d = pair.path.order();
  if (pair.path.zs() != pair.stationary.zs())
    throw std::invalid_argument("coupling_gaps: paths do not share innovations");
  Mat diff(d);
  Vec sum(d, 0.0);
  for (std::size_t k = 1; k <= horizon; ++k) {
    const auto u = pair.path.state(k - 1);
    const auto ub = pair.stationary.state(k - 1);
    diff.add_outer(u, u);
    diff.add_outer(ub, ub, -1.0);
    const double zk = pair.path.z(k);
    for (std::size_t i = 0; i < d; ++i) sum[i] += (u[i] - ub[i]) * zk;
  }
  const double n = static_cast<double>(horizon);
  return {frobenius_norm(diff) / n, norm2(sum) / std::sqrt(n)};
}

inline CouplingGaps coupling_gaps(const CoupledPaths& pair) {
  return coupling_gaps(pair, pair.path.length());
}

/// Pathwise bound n^{-1/2}(||U_0|| + ||Ubar_0||) sum_j ||B^{j-1}||_F |Z_j|.
inline double coupling_sum_bound(const CoupledPaths& pair, const ArParams& p,
                                 std::size_t horizon) {
  const Mat b = companion(p);
  Mat power = Mat::identity(p.order());
  double s = 0.0;
  for (std::size_t j = 1; j <= horizon; ++j) {
    s += frobenius_norm(power) * std::abs(pair.path.z(j));
    power = b * power;
  }
  const double start = norm2(pair.path.state(0)) + norm2(pair.stationary.state(0));
  return start * s / std::sqrt(static_cast<double>(horizon));
}

/// (1/n) sum_{k=1}^n U_{k-1} U_{k-1}^T.
inline SymMat ergodic_average_outer(const ArPath& path, std::size_t horizon) {
  if (horizon < 1) throw std::invalid_argument("ergodic_average_outer: empty horizon");
  Mat s = gram(path, horizon).mat();
  s *= 1.0 / static_cast<double>(horizon);
  return SymMat::symmetrize(s);
}
inline SymMat ergodic_average_outer(const ArPath& path) {
  return ergodic_average_outer(path, path.length());
}

// ---------------------------------------------------------------------------

/// Coefficients of a stable AR(d) drawn through its characteristic roots:
/// real roots and conjugate pairs with modulus at most max_modulus.
inline ArParams random_stable_params(std::size_t d, RngStream& rng,
                                     double max_modulus = 0.95) {
  using cd = std::complex<double>;
  std::vector<cd> roots;
  while (roots.size() < d) {
    const bool pair = roots.size() + 2 <= d && rng.uniform() < 0.5;
    if (pair) {
      const double r = max_modulus * std::sqrt(rng.uniform());
      const double ang = std::numbers::pi * rng.uniform();
      roots.push_back(std::polar(r, ang));
      roots.push_back(std::polar(r, -ang));
    } else {
      roots.emplace_back(max_modulus * (2.0 * rng.uniform() - 1.0), 0.0);
    }
  }
  // prod (z - r_i) = z^d + c_1 z^{d-1} + ... + c_d, theta_i = -c_i.
  std::vector<cd> c{cd(1.0, 0.0)};
  for (const cd& r : roots) {
    std::vector<cd> next(c.size() + 1, cd(0.0, 0.0));
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= r * c[i];
    }
    c = std::move(next);
  }
  Vec theta(d);
  for (std::size_t i = 0; i < d; ++i) theta[i] = -c[i + 1].real();
  return ArParams(std::move(theta));
}

}  // namespace mdclt
