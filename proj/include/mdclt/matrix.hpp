#pragma once

// Small dense linear algebra for d <= 16: norms, spectral radius, symmetric
// eigendecomposition, PSD square roots, Cholesky, inversion and a discrete
// Lyapunov fixed-point solver. All routines are pure functions.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdclt/error.hpp"

namespace mdclt {

using Vec = std::vector<double>;

inline constexpr std::size_t kMaxDim = 16;

/// Square d x d matrix, row-major.
class Mat {
 public:
  Mat() = default;

  explicit Mat(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {
    check_dim(dim);
  }

  Mat(std::size_t dim, std::vector<double> row_major)
      : dim_(dim), data_(std::move(row_major)) {
    check_dim(dim);
    if (data_.size() != dim * dim)
      throw std::invalid_argument("Mat: entry count does not match dim");
    for (double v : data_)
      if (!std::isfinite(v))
        throw std::invalid_argument("Mat: non-finite entry");
  }

  Mat(std::initializer_list<std::initializer_list<double>> rows) {
    dim_ = rows.size();
    check_dim(dim_);
    data_.reserve(dim_ * dim_);
    for (const auto& r : rows) {
      if (r.size() != dim_)
        throw std::invalid_argument("Mat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Mat zeros(std::size_t dim) { return Mat(dim); }

  static Mat identity(std::size_t dim) {
    Mat m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  /// One in the upper-left corner, zeros elsewhere.
  static Mat corner(std::size_t dim) {
    Mat m(dim);
    m(0, 0) = 1.0;
    return m;
  }

  static Mat diagonal(std::span<const double> diag) {
    Mat m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  static Mat outer(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
      throw std::invalid_argument("outer: size mismatch");
    Mat m(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * dim_ + j];
  }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  Mat transpose() const {
    Mat t(dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// Rank-one update: this += alpha * u v^T.
  void add_outer(std::span<const double> u, std::span<const double> v,
                 double alpha = 1.0) {
    for (std::size_t i = 0; i < dim_; ++i) {
      const double ui = alpha * u[i];
      double* row = &data_[i * dim_];
      for (std::size_t j = 0; j < dim_; ++j) row[j] += ui * v[j];
    }
  }

  Mat& operator+=(const Mat& o) {
    same_dim(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    same_dim(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Mat& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double s) { return a *= s; }
  friend Mat operator*(double s, Mat a) { return a *= s; }

  friend Mat operator*(const Mat& a, const Mat& b) {
    a.same_dim(b);
    const std::size_t d = a.dim_;
    Mat c(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend Vec operator*(const Mat& a, std::span<const double> x) {
    if (x.size() != a.dim_) throw std::invalid_argument("Mat*Vec: size mismatch");
    Vec y(a.dim_, 0.0);
    for (std::size_t i = 0; i < a.dim_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.dim_; ++j) s += a(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  static void check_dim(std::size_t dim) {
    if (dim < 1 || dim > kMaxDim)
      throw std::invalid_argument("Mat: dim must be in [1, 16], got " +
                                  std::to_string(dim));
  }
  void same_dim(const Mat& o) const {
    if (o.dim_ != dim_) throw std::invalid_argument("Mat: dimension mismatch");
  }

  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Symmetric matrix. Construction checks symmetry to 1e-12 (1 + max|entry|)
/// and stores the exactly symmetrized average.
class SymMat {
 public:
  SymMat() = default;

  explicit SymMat(const Mat& m) : m_(m) {
    const double tol = 1e-12 * (1.0 + m.max_abs());
    for (std::size_t i = 0; i < m.dim(); ++i)
      for (std::size_t j = i + 1; j < m.dim(); ++j) {
        if (std::abs(m(i, j) - m(j, i)) > tol)
          throw std::invalid_argument("SymMat: matrix is not symmetric");
        const double avg = 0.5 * (m(i, j) + m(j, i));
        m_(i, j) = avg;
        m_(j, i) = avg;
      }
    if (!m_.all_finite()) throw std::invalid_argument("SymMat: non-finite entry");
  }

  /// Symmetrizes (A + A^T)/2 without checking.
  static SymMat symmetrize(const Mat& a) {
    Mat s = a;
    for (std::size_t i = 0; i < a.dim(); ++i)
      for (std::size_t j = i + 1; j < a.dim(); ++j) {
        const double avg = 0.5 * (a(i, j) + a(j, i));
        s(i, j) = avg;
        s(j, i) = avg;
      }
    return SymMat(s);
  }

  static SymMat identity(std::size_t d) { return SymMat(Mat::identity(d)); }
  static SymMat zeros(std::size_t d) { return SymMat(Mat::zeros(d)); }

  std::size_t dim() const noexcept { return m_.dim(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Mat& mat() const noexcept { return m_; }
  operator const Mat&() const noexcept { return m_; }

  friend bool operator==(const SymMat&, const SymMat&) = default;

 private:
  Mat m_;
};

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline Vec operator-(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec operator+(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vec scaled(std::span<const double> v, double s) {
  Vec r(v.begin(), v.end());
  for (double& x : r) x *= s;
  return r;
}

// ---------------------------------------------------------------------------
// Norms

inline double frobenius_norm(const Mat& m) {
  // Scaled accumulation so that entries near 1e154 do not overflow.
  const double scale = m.max_abs();
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double v : m.data()) {
    const double r = v / scale;
    s += r * r;
  }
  return scale * std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Spectral radius

namespace detail {

inline bool is_companion(const Mat& m) {
  const std::size_t d = m.dim();
  for (std::size_t i = 1; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (m(i, j) != (j + 1 == i ? 1.0 : 0.0)) return false;
  return true;
}

/// Upper bounds ||A^(2^k)||_F^(1/2^k) with rescaling at every squaring.
/// Certified when two consecutive bounds differ by at most tol/2: the bound
/// error roughly halves per squaring so the gap estimates the remaining error.
inline std::optional<double> gelfand_radius(const Mat& m, double tol,
                                            int max_squarings = 62) {
  double norm = frobenius_norm(m);
  if (norm == 0.0) return 0.0;
  Mat n = m * (1.0 / norm);
  double log_norm = std::log(norm);  // log ||A^(2^k)||_F
  double power = 1.0;                // 2^k
  double prev = std::exp(log_norm / power);
  for (int k = 0; k < max_squarings; ++k) {
    Mat sq = n * n;
    const double f = frobenius_norm(sq);
    if (f == 0.0) return 0.0;  // nilpotent
    log_norm = 2.0 * log_norm + std::log(f);
    power *= 2.0;
    n = sq * (1.0 / f);
    const double bound = std::exp(log_norm / power);
    if (std::abs(prev - bound) <= 0.5 * tol) return bound;
    prev = bound;
  }
  return std::nullopt;
}

/// Aberth-Ehrlich simultaneous iteration on the monic polynomial
/// z^d + c[0] z^(d-1) + ... + c[d-1]. Returns the roots when every correction
/// has fallen below `tol`.
inline std::optional<std::vector<std::complex<double>>> polynomial_roots(
    std::span<const double> c, double tol, int max_iter = 2000) {
  using cd = std::complex<double>;
  const std::size_t d = c.size();
  if (d == 0) return std::vector<cd>{};
  if (d == 1) return std::vector<cd>{cd(-c[0], 0.0)};
  double radius = 0.0;
  for (double v : c) radius = std::max(radius, std::abs(v));
  radius = 1.0 + radius;  // Cauchy bound
  std::vector<cd> z(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(d) + 0.4;
    z[k] = std::polar(0.5 * radius, ang);
  }
  auto eval = [&](cd x, cd& dp) {
    cd p(1.0, 0.0);
    dp = cd(0.0, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      dp = dp * x + p;
      p = p * x + c[i];
    }
    return p;
  };
  for (int it = 0; it < max_iter; ++it) {
    double max_step = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      cd dp;
      const cd p = eval(z[k], dp);
      if (p == cd(0.0, 0.0)) continue;
      const cd w = p / dp;
      cd s(0.0, 0.0);
      for (std::size_t j = 0; j < d; ++j)
        if (j != k) s += 1.0 / (z[k] - z[j]);
      const cd step = w / (1.0 - w * s);
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) continue;
      z[k] -= step;
      max_step = std::max(max_step, std::abs(step));
    }
    if (max_step <= tol) return z;
  }
  return std::nullopt;
}

}  // namespace detail

/// Spectral radius within +-tol. Uses Gelfand refinement for any matrix and,
/// for companion matrices, polynomial root finding; the tighter certified
/// value is returned.
inline double spectral_radius(const Mat& m, double tol = 1e-10) {
  if (!(tol > 0.0)) throw std::invalid_argument("spectral_radius: tol must be > 0");
  if (!m.all_finite()) throw std::invalid_argument("spectral_radius: non-finite entry");
  const auto gelfand = detail::gelfand_radius(m, tol);
  std::optional<double> roots_rho;
  if (detail::is_companion(m)) {
    std::vector<double> c(m.dim());
    for (std::size_t i = 0; i < m.dim(); ++i) c[i] = -m(0, i);
    if (auto roots = detail::polynomial_roots(c, 1e-3 * tol)) {
      double r = 0.0;
      for (const auto& z : *roots) r = std::max(r, std::abs(z));
      roots_rho = r;
    }
  }
  if (gelfand && roots_rho) return std::min(*gelfand, *roots_rho);
  if (roots_rho) return *roots_rho;
  if (gelfand) return *gelfand;
  throw NonConvergence("spectral_radius: no method certified tol");
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)

struct SymEigen {
  Vec values;   // descending
  Mat vectors;  // column i is the eigenvector of values[i]
};

inline SymEigen sym_eigen(const SymMat& s, double tol = 1e-12,
                          int max_sweeps = 100) {
  const std::size_t d = s.dim();
  Mat a = s.mat();
  Mat v = Mat::identity(d);
  const double scale = std::max(frobenius_norm(a), 1e-300);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-3 * tol * scale) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) throw NonConvergence("sym_eigen: Jacobi sweep budget exhausted");

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymEigen out{Vec(d), Mat(d)};
  for (std::size_t c = 0; c < d; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < d; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

inline double min_eigenvalue(const SymMat& s) { return sym_eigen(s).values.back(); }

/// Rebuilds Q f(Lambda) Q^T from an eigendecomposition.
template <typename F>
SymMat spectral_apply(const SymEigen& e, F&& f) {
  const std::size_t d = e.values.size();
  Mat r(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double fk = f(e.values[k]);
    if (fk == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        r(i, j) += fk * e.vectors(i, k) * e.vectors(j, k);
  }
  return SymMat::symmetrize(r);
}

inline constexpr double kPsdClamp = 1e-10;

/// Unique PSD square root. Eigenvalues in [-1e-10, 0) are clamped to zero.
inline SymMat psd_sqrt(const SymMat& s) {
  const SymEigen e = sym_eigen(s);
  if (e.values.back() < -kPsdClamp) throw NotPsd(e.values.back());
  return spectral_apply(e, [](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; });
}

// ---------------------------------------------------------------------------
// Cholesky and inversion

/// Lower-triangular L with L L^T = s, or nullopt when some pivot is below
/// 1e-12 (1 + max diagonal).
inline std::optional<Mat> cholesky_pd(const SymMat& s) {
  const std::size_t d = s.dim();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < d; ++i) max_diag = std::max(max_diag, s(i, i));
  const double threshold = 1e-12 * (1.0 + max_diag);
  Mat l(d);
  for (std::size_t j = 0; j < d; ++j) {
    double pivot = s(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > threshold)) return std::nullopt;
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return l;
}

inline bool is_positive_definite(const SymMat& s) {
  return cholesky_pd(s).has_value();
}

/// Solves L L^T x = b given the Cholesky factor.
inline Vec cholesky_solve(const Mat& l, std::span<const double> b) {
  const std::size_t d = l.dim();
  Vec y(b.begin(), b.end());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t ii = d; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < d; ++k) y[ii] -= l(k, ii) * y[k];
    y[ii] /= l(ii, ii);
  }
  return y;
}

inline SymMat inverse(const SymMat& s) {
  const auto l = cholesky_pd(s);
  if (!l) throw NotPd("inverse: matrix is not positive definite");
  const std::size_t d = s.dim();
  Mat inv(d);
  Vec e(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    std::fill(e.begin(), e.end(), 0.0);
    e[c] = 1.0;
    const Vec col = cholesky_solve(*l, e);
    for (std::size_t r = 0; r < d; ++r) inv(r, c) = col[r];
  }
  return SymMat::symmetrize(inv);
}

// ---------------------------------------------------------------------------
// Lyapunov fixed point and power-norm constants

/// Fixed-point iteration S <- c + b S b^T from S = c. Stops when the update
/// (which equals the residual of the current iterate) is at most
/// tol (1 + ||S||_F); an absolute bound stalls at rounding level once ||S||
/// is large.
inline SymMat solve_lyapunov(const Mat& b, const SymMat& c, double tol = 1e-13,
                             long max_iter = 200000) {
  if (b.dim() != c.dim()) throw std::invalid_argument("solve_lyapunov: dim mismatch");
  const Mat bt = b.transpose();
  Mat s = c.mat();
  double first = -1.0;
  for (long it = 0; it < max_iter; ++it) {
    Mat next = c.mat() + b * s * bt;
    const double delta = frobenius_norm(next - s);
    if (!std::isfinite(delta))
      throw NonConvergence("solve_lyapunov: divergent iterates (rho(b) >= 1)");
    if (delta <= tol * (1.0 + frobenius_norm(next))) return SymMat::symmetrize(next);
    if (first < 0.0) first = std::max(delta, 1e-300);
    if (delta > 1e12 * first)
      throw NonConvergence("solve_lyapunov: divergent iterates (rho(b) >= 1)");
    s = std::move(next);
  }
  throw NonConvergence("solve_lyapunov: iteration budget exhausted");
}

struct StabilityConstants {
  double kappa1 = 0.0;      // sum_j ||B^j||_F up to J
  double kappa2 = 0.0;      // sum_j ||B^j||_F^2 up to J
  double kappa3 = 0.0;      // sup_j ||B^j||_F
  double tail_bound = 0.0;  // certified bound on sum_{j>J} ||B^j||_F
  double tail_bound_sq = 0.0;  // certified bound on sum_{j>J} ||B^j||_F^2
  std::size_t terms = 0;    // J
  std::size_t window = 0;   // m with ||B^m||_F <= 1/2
};

namespace detail {

/// Lazily computed f_j = ||B^j||_F with the contraction window used for tail
/// certificates: with q = ||B^m||_F < 1, submultiplicativity gives
///   sum_{j>J} f_j   <= (f_{J+1} + ... + f_{J+m}) / (1 - q)
///   sum_{j>J} f_j^2 <= (f_{J+1}^2 + ... + f_{J+m}^2) / (1 - q^2).
class PowerNorms {
 public:
  explicit PowerNorms(const Mat& b, std::size_t budget = 200000)
      : b_(b), power_(Mat::identity(b.dim())), budget_(budget) {
    norms_.push_back(frobenius_norm(power_));
  }

  double at(std::size_t j) {
    while (norms_.size() <= j) {
      if (norms_.size() > budget_)
        throw NonConvergence("power norms: budget exhausted (rho(B) close to 1?)");
      power_ = b_ * power_;
      const double f = frobenius_norm(power_);
      if (!std::isfinite(f)) throw NonConvergence("power norms: overflow");
      norms_.push_back(f);
    }
    return norms_[j];
  }

  /// Smallest m >= 1 with ||B^m||_F <= 1/2.
  std::size_t window() {
    if (window_ == 0) {
      for (std::size_t m = 1;; ++m)
        if (at(m) <= 0.5) {
          window_ = m;
          break;
        }
    }
    return window_;
  }

  double tail(std::size_t J, bool squared) {
    const std::size_t m = window();
    const double q = at(m);
    double s = 0.0;
    for (std::size_t i = 1; i <= m; ++i) {
      const double f = at(J + i);
      s += squared ? f * f : f;
    }
    return s / (squared ? (1.0 - q * q) : (1.0 - q));
  }

 private:
  Mat b_;
  Mat power_;
  std::vector<double> norms_;
  std::size_t budget_;
  std::size_t window_ = 0;
};

}  // namespace detail

inline StabilityConstants stability_constants(const Mat& b, double tol = 1e-12) {
  if (!(tol > 0.0)) throw std::invalid_argument("stability_constants: tol must be > 0");
  detail::PowerNorms f(b);
  const std::size_t m = f.window();
  StabilityConstants out;
  out.window = m;
  std::size_t J = 0;
  while (f.tail(J, false) > tol) ++J;
  for (std::size_t j = 0; j <= J; ++j) {
    const double v = f.at(j);
    out.kappa1 += v;
    out.kappa2 += v * v;
  }
  for (std::size_t j = 0; j <= J + m; ++j) out.kappa3 = std::max(out.kappa3, f.at(j));
  out.terms = J;
  out.tail_bound = f.tail(J, false);
  out.tail_bound_sq = f.tail(J, true);
  return out;
}

}  // namespace mdclt
