#pragma once

// Condition statistics for one row X_n1..X_nkn of a martingale difference
// array: conditional Lindeberg sums, Raikov and norming matrices, maxima,
// the box truncation X_nk(a) with its compensator, component-wise Lindeberg
// sums, index reversal, and a pathwise audit of the inequalities that link
// these conditions. Conditional moments come from an exact oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdclt/ar_process.hpp"
#include "mdclt/error.hpp"
#include "mdclt/innovations.hpp"
#include "mdclt/matrix.hpp"
#include "mdclt/rng.hpp"

namespace mdclt {

/// Exact conditional moments of each row entry given the past of the row.
/// Indices are zero-based: k refers to X_{n,k+1}.
class ConditionalMoments {
 public:
  virtual ~ConditionalMoments() = default;

  virtual std::size_t length() const = 0;
  virtual std::size_t dim() const = 0;

  /// E(||X|| 1{||X|| >= eps} | F)
  virtual double abs1_tail(std::size_t k, double eps) const = 0;
  /// E(||X|| 1{||X|| > a} | F)
  virtual double abs1_tail_strict(std::size_t k, double a) const = 0;
  /// E(||X||^2 1{||X|| >= eps} | F)
  virtual double m2_tail(std::size_t k, double eps) const = 0;
  /// E(X_j^2 1{|X_j| >= eps} | F)
  virtual double component_m2_tail(std::size_t k, std::size_t j, double eps) const = 0;
  /// acc += E(X X^T | F)
  virtual void add_second_moment(std::size_t k, Mat& acc) const = 0;
  /// E(X 1{||X|| <= a} | F)
  virtual Vec box_mean(std::size_t k, double a) const = 0;
};

/// Entries of the form X_k = v_k Z_k with v_k known given the past and Z_k
/// independent of it with law `spec`. All moments vanish when v_k = 0.
class FactorMoments final : public ConditionalMoments {
 public:
  FactorMoments(std::size_t dim, Vec factors, InnovationSpec spec)
      : dim_(dim), factors_(std::move(factors)), spec_(spec) {
    if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("FactorMoments: bad dim");
    if (factors_.size() % dim_ != 0)
      throw std::invalid_argument("FactorMoments: factor count not a multiple of dim");
    norms_.resize(factors_.size() / dim_);
    for (std::size_t k = 0; k < norms_.size(); ++k) norms_[k] = norm2(factor(k));
  }

  std::size_t length() const override { return norms_.size(); }
  std::size_t dim() const override { return dim_; }

  std::span<const double> factor(std::size_t k) const {
    return {factors_.data() + k * dim_, dim_};
  }
  const InnovationSpec& innovation() const noexcept { return spec_; }

  double abs1_tail(std::size_t k, double eps) const override {
    const double r = norms_[k];
    return r > 0.0 ? r * spec_.abs1_tail(eps / r) : 0.0;
  }
  double abs1_tail_strict(std::size_t k, double a) const override {
    const double r = norms_[k];
    return r > 0.0 ? r * spec_.abs1_tail_strict(a / r) : 0.0;
  }
  double m2_tail(std::size_t k, double eps) const override {
    const double r = norms_[k];
    return r > 0.0 ? r * r * spec_.m2_tail(eps / r) : 0.0;
  }
  double component_m2_tail(std::size_t k, std::size_t j, double eps) const override {
    const double r = std::abs(factors_[k * dim_ + j]);
    return r > 0.0 ? r * r * spec_.m2_tail(eps / r) : 0.0;
  }
  void add_second_moment(std::size_t k, Mat& acc) const override {
    acc.add_outer(factor(k), factor(k), spec_.variance());
  }
  Vec box_mean(std::size_t k, double a) const override {
    const double r = norms_[k];
    if (r == 0.0) return Vec(dim_, 0.0);
    return scaled(factor(k), spec_.m1_box(a / r));
  }

 private:
  std::size_t dim_;
  Vec factors_;
  Vec norms_;
  InnovationSpec spec_;
};

/// The oracle of a row read backwards: entry k of this is entry kn-1-k of base.
class ReversedMoments final : public ConditionalMoments {
 public:
  explicit ReversedMoments(std::shared_ptr<const ConditionalMoments> base)
      : base_(std::move(base)) {}

  const std::shared_ptr<const ConditionalMoments>& base() const noexcept { return base_; }

  std::size_t length() const override { return base_->length(); }
  std::size_t dim() const override { return base_->dim(); }
  double abs1_tail(std::size_t k, double eps) const override {
    return base_->abs1_tail(flip(k), eps);
  }
  double abs1_tail_strict(std::size_t k, double a) const override {
    return base_->abs1_tail_strict(flip(k), a);
  }
  double m2_tail(std::size_t k, double eps) const override {
    return base_->m2_tail(flip(k), eps);
  }
  double component_m2_tail(std::size_t k, std::size_t j, double eps) const override {
    return base_->component_m2_tail(flip(k), j, eps);
  }
  void add_second_moment(std::size_t k, Mat& acc) const override {
    base_->add_second_moment(flip(k), acc);
  }
  Vec box_mean(std::size_t k, double a) const override { return base_->box_mean(flip(k), a); }

 private:
  std::size_t flip(std::size_t k) const { return base_->length() - 1 - k; }
  std::shared_ptr<const ConditionalMoments> base_;
};

/// Row n of the array: entries X_n1..X_nkn, kn >= n, with their oracle.
class ArrayRow {
 public:
  ArrayRow(std::size_t n, std::size_t dim, Vec x,
           std::shared_ptr<const ConditionalMoments> oracle)
      : n_(n), dim_(dim), x_(std::move(x)), oracle_(std::move(oracle)) {
    if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("ArrayRow: bad dim");
    if (x_.size() % dim_ != 0) throw std::invalid_argument("ArrayRow: ragged entries");
    if (!oracle_ || oracle_->length() != length() || oracle_->dim() != dim_)
      throw std::invalid_argument("ArrayRow: oracle does not match entries");
    if (length() < n_) throw std::invalid_argument("ArrayRow: row length kn < n");
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t length() const noexcept { return x_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> x(std::size_t k) const { return {x_.data() + k * dim_, dim_}; }
  const Vec& entries() const noexcept { return x_; }
  const ConditionalMoments& oracle() const noexcept { return *oracle_; }
  const std::shared_ptr<const ConditionalMoments>& shared_oracle() const noexcept {
    return oracle_;
  }

 private:
  std::size_t n_;
  std::size_t dim_;
  Vec x_;
  std::shared_ptr<const ConditionalMoments> oracle_;
};

/// Row with entries v_k z_k and the matching factor oracle.
inline ArrayRow factor_row(std::size_t n, std::size_t dim, Vec factors,
                           std::span<const double> z, const InnovationSpec& spec) {
  if (factors.size() != z.size() * dim)
    throw std::invalid_argument("factor_row: factor and innovation counts differ");
  Vec x(factors.size());
  for (std::size_t k = 0; k < z.size(); ++k)
    for (std::size_t j = 0; j < dim; ++j) x[k * dim + j] = factors[k * dim + j] * z[k];
  auto oracle = std::make_shared<const FactorMoments>(dim, std::move(factors), spec);
  return ArrayRow(n, dim, std::move(x), std::move(oracle));
}

/// X_nk = K U_{k-1} Z_k for k = 1..horizon, with n = kn = horizon.
inline ArrayRow build_ar_row(const ArPath& path, const ArParams& p, const InnovationSpec& spec,
                             const Mat& scaling, std::size_t horizon) {
  const std::size_t d = path.order();
  if (p.order() != d || scaling.dim() != d)
    throw std::invalid_argument("build_ar_row: dimension mismatch");
  if (horizon < 1 || horizon > path.length())
    throw std::invalid_argument("build_ar_row: horizon outside the path");
  Vec factors(horizon * d);
  for (std::size_t k = 1; k <= horizon; ++k) {
    const Vec v = scaling * path.state(k - 1);
    std::copy(v.begin(), v.end(), factors.begin() + static_cast<long>((k - 1) * d));
  }
  return factor_row(horizon, d, std::move(factors),
                    std::span<const double>(path.zs()).first(horizon), spec);
}

/// Default scaling n^{-1/2} I.
inline ArrayRow build_ar_row(const ArPath& path, const ArParams& p, const InnovationSpec& spec,
                             std::size_t horizon) {
  Mat k = Mat::identity(path.order());
  k *= 1.0 / std::sqrt(static_cast<double>(horizon));
  return build_ar_row(path, p, spec, k, horizon);
}

inline ArrayRow build_ar_row(const ArPath& path, const ArParams& p, const InnovationSpec& spec) {
  return build_ar_row(path, p, spec, path.length());
}

// ---------------------------------------------------------------------------
// Statistics

struct ClbStats {
  double clb1 = 0.0;
  double clb2 = 0.0;
};

inline ClbStats clb_stats(const ArrayRow& row, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("clb_stats: eps must be > 0");
  ClbStats s;
  const auto& o = row.oracle();
  for (std::size_t k = 0; k < row.length(); ++k) {
    s.clb1 += o.abs1_tail(k, eps);
    s.clb2 += o.m2_tail(k, eps);
  }
  return s;
}

struct RaikovNorming {
  SymMat raikov;   // sum X X^T
  SymMat norming;  // sum E(X X^T | F)
};

inline RaikovNorming raikov_and_norming(const ArrayRow& row) {
  const std::size_t d = row.dim();
  Mat r(d), m(d);
  for (std::size_t k = 0; k < row.length(); ++k) {
    r.add_outer(row.x(k), row.x(k));
    row.oracle().add_second_moment(k, m);
  }
  return {SymMat::symmetrize(r), SymMat::symmetrize(m)};
}

struct TruncatedRow {
  double a = 0.0;
  std::size_t dim = 0;
  Vec y;             // X_nk(a), flattened
  Vec compensator;   // E(X_nk 1{||X_nk|| <= a} | F), flattened
  std::span<const double> at(std::size_t k) const { return {y.data() + k * dim, dim}; }
  std::size_t length() const noexcept { return dim == 0 ? 0 : y.size() / dim; }
};

inline TruncatedRow truncate_row(const ArrayRow& row, double a) {
  if (!(a > 0.0)) throw std::invalid_argument("truncate_row: a must be > 0");
  const std::size_t d = row.dim();
  TruncatedRow t{a, d, Vec(row.entries().size(), 0.0), Vec(row.entries().size(), 0.0)};
  for (std::size_t k = 0; k < row.length(); ++k) {
    const auto x = row.x(k);
    const bool inside = norm2(x) <= a;
    const Vec comp = row.oracle().box_mean(k, a);
    for (std::size_t j = 0; j < d; ++j) {
      t.compensator[k * d + j] = comp[j];
      t.y[k * d + j] = (inside ? x[j] : 0.0) - comp[j];
    }
  }
  return t;
}

struct TruncationStats {
  Vec ta_residual;  // sum_k [x_k 1{||x_k|| > a} + compensator_k]
  double tma = 0.0; // max_k ||y_k||
  SymMat tra;       // sum_k y_k y_k^T
};

inline TruncationStats truncation_family_stats(const ArrayRow& row, const TruncatedRow& t) {
  const std::size_t d = row.dim();
  TruncationStats s{Vec(d, 0.0), 0.0, SymMat()};
  Mat tra(d);
  for (std::size_t k = 0; k < row.length(); ++k) {
    const auto x = row.x(k);
    const bool outside = norm2(x) > t.a;
    for (std::size_t j = 0; j < d; ++j)
      s.ta_residual[j] += (outside ? x[j] : 0.0) + t.compensator[k * d + j];
    const auto y = t.at(k);
    s.tma = std::max(s.tma, norm2(y));
    tra.add_outer(y, y);
  }
  s.tra = SymMat::symmetrize(tra);
  return s;
}

inline TruncationStats truncation_family_stats(const ArrayRow& row, double a) {
  return truncation_family_stats(row, truncate_row(row, a));
}

struct MaxStats {
  double max_norm = 0.0;
  double max_norm_sq = 0.0;
};

inline MaxStats max_stats(const ArrayRow& row) {
  MaxStats m;
  for (std::size_t k = 0; k < row.length(); ++k) m.max_norm = std::max(m.max_norm, norm2(row.x(k)));
  m.max_norm_sq = m.max_norm * m.max_norm;
  return m;
}

/// Entry j is sum_k E(X_nk,j^2 1{|X_nk,j| >= eps} | F).
inline Vec componentwise_clb(const ArrayRow& row, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("componentwise_clb: eps must be > 0");
  Vec out(row.dim(), 0.0);
  for (std::size_t k = 0; k < row.length(); ++k)
    for (std::size_t j = 0; j < row.dim(); ++j)
      out[j] += row.oracle().component_m2_tail(k, j, eps);
  return out;
}

/// x'_k = x_{kn+1-k} with the oracle reindexed. Reversing a reversed row
/// unwraps instead of stacking.
inline ArrayRow reverse_row(const ArrayRow& row) {
  const std::size_t d = row.dim(), kn = row.length();
  Vec x(row.entries().size());
  for (std::size_t k = 0; k < kn; ++k) {
    const auto src = row.x(kn - 1 - k);
    std::copy(src.begin(), src.end(), x.begin() + static_cast<long>(k * d));
  }
  std::shared_ptr<const ConditionalMoments> oracle;
  if (auto rev = std::dynamic_pointer_cast<const ReversedMoments>(row.shared_oracle()))
    oracle = rev->base();
  else
    oracle = std::make_shared<const ReversedMoments>(row.shared_oracle());
  return ArrayRow(row.n(), d, std::move(x), std::move(oracle));
}

// ---------------------------------------------------------------------------
// Report

struct ConditionReport {
  std::size_t n = 0;
  double a = 0.0;
  Vec eps;
  Vec clb1;  // per eps
  Vec clb2;  // per eps
  std::vector<Vec> per_component_clb2;  // [eps][j]
  SymMat raikov;
  SymMat norming;
  double max_norm = 0.0;
  double max_norm_sq = 0.0;
  Vec ta_residual;
  double tma = 0.0;
  SymMat tra;
};

inline ConditionReport condition_report(const ArrayRow& row, std::span<const double> eps,
                                        double a) {
  ConditionReport r;
  r.n = row.n();
  r.a = a;
  r.eps.assign(eps.begin(), eps.end());
  for (double e : eps) {
    const ClbStats c = clb_stats(row, e);
    r.clb1.push_back(c.clb1);
    r.clb2.push_back(c.clb2);
    r.per_component_clb2.push_back(componentwise_clb(row, e));
  }
  RaikovNorming rn = raikov_and_norming(row);
  r.raikov = std::move(rn.raikov);
  r.norming = std::move(rn.norming);
  const MaxStats m = max_stats(row);
  r.max_norm = m.max_norm;
  r.max_norm_sq = m.max_norm_sq;
  TruncationStats t = truncation_family_stats(row, a);
  r.ta_residual = std::move(t.ta_residual);
  r.tma = t.tma;
  r.tra = std::move(t.tra);
  return r;
}

/// Column names of one condition CSV line; matrices are flattened row-major
/// with 1-based suffixes such as raikov_1_2.
inline std::vector<std::string> condition_columns(std::size_t d) {
  std::vector<std::string> cols{"n",   "eps",      "a",           "clb1", "clb2",
                                "max_norm", "max_norm_sq", "tma",  "ta_residual_norm"};
  for (std::size_t j = 1; j <= d; ++j) cols.push_back("ta_residual_" + std::to_string(j));
  for (const char* m : {"raikov", "norming", "tra"})
    for (std::size_t i = 1; i <= d; ++i)
      for (std::size_t j = 1; j <= d; ++j)
        cols.push_back(std::string(m) + "_" + std::to_string(i) + "_" + std::to_string(j));
  for (std::size_t j = 1; j <= d; ++j) cols.push_back("component_clb2_" + std::to_string(j));
  return cols;
}

/// Values for the line of eps index `e`, in condition_columns order.
inline Vec condition_values(const ConditionReport& r, std::size_t e) {
  const std::size_t d = r.ta_residual.size();
  Vec v{static_cast<double>(r.n), r.eps.at(e), r.a,  r.clb1[e],
        r.clb2[e], r.max_norm,   r.max_norm_sq, r.tma, norm2(r.ta_residual)};
  v.insert(v.end(), r.ta_residual.begin(), r.ta_residual.end());
  for (const SymMat* m : {&r.raikov, &r.norming, &r.tra})
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) v.push_back((*m)(i, j));
  const Vec& c = r.per_component_clb2[e];
  v.insert(v.end(), c.begin(), c.end());
  return v;
}

// ---------------------------------------------------------------------------
// Inequality audit

struct AuditCheck {
  std::string name;  // "i" .. "vi"
  std::string description;
  bool passed = true;
  std::size_t k = 0;  // 1-based offending entry, 0 for a row-level violation
  std::string detail;
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  double identity_error = 0.0;      // max_j |sum x - sum y - ta_residual|_j
  double max_truncated_norm = 0.0;  // max_k ||y_k||
  double a = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.passed; });
  }
  void throw_if_failed() const {
    for (const auto& c : checks)
      if (!c.passed) throw AuditFailure(c.name, c.k, c.description + ": " + c.detail);
  }
};

namespace detail {
inline constexpr double kAuditSlack = 1e-12;

inline bool within(double lhs, double rhs) {
  return lhs <= rhs + kAuditSlack * (std::abs(lhs) + std::abs(rhs)) + 1e-300;
}

inline void fail(AuditCheck& c, std::size_t k, double lhs, double rhs) {
  if (!c.passed) return;
  c.passed = false;
  c.k = k;
  c.detail = "lhs " + std::to_string(lhs) + " > rhs " + std::to_string(rhs);
}
}  // namespace detail

/// Evaluates every pathwise inequality linking the conditions. Checks (ii),
/// (iii) and (vi) are verified both term by term and on the row sums.
inline AuditReport inequality_audit(const ArrayRow& row, double eps, double a, RngStream& rng,
                                    std::size_t probes = 4) {
  using detail::within;
  if (!(eps > 0.0) || !(a > 0.0))
    throw std::invalid_argument("inequality_audit: eps and a must be > 0");
  const std::size_t d = row.dim(), kn = row.length();
  const auto& o = row.oracle();
  AuditReport rep;
  rep.a = a;
  rep.checks = {
      {"i", "positive Lindeberg sum implies max norm >= eps", true, 0, ""},
      {"ii", "L1 Lindeberg sum <= L2 Lindeberg sum / eps", true, 0, ""},
      {"iii", "component/vector Lindeberg sandwich", true, 0, ""},
      {"iv", "|<u, x_k>| <= |u| |x_k|", true, 0, ""},
      {"v", "|y_k| <= 2a", true, 0, ""},
      {"vi", "|sum compensators| <= sum E(|x| 1{|x| > a} | F)", true, 0, ""},
  };
  auto& c1 = rep.checks[0];
  auto& c2 = rep.checks[1];
  auto& c3 = rep.checks[2];
  auto& c4 = rep.checks[3];
  auto& c5 = rep.checks[4];
  auto& c6 = rep.checks[5];

  const double eps_c = eps / std::sqrt(static_cast<double>(d));
  double realized = 0.0, max_norm = 0.0, clb1 = 0.0, clb2 = 0.0, strict_sum = 0.0;
  Vec comp_sum_j(d, 0.0), comp_small_j(d, 0.0), comp_total(d, 0.0);
  std::vector<Vec> us(probes, Vec(d));
  for (auto& u : us)
    for (double& v : u) v = rng.normal();

  const TruncatedRow t = truncate_row(row, a);
  const TruncationStats ts = truncation_family_stats(row, t);

  for (std::size_t k = 0; k < kn; ++k) {
    const auto x = row.x(k);
    const double nx = norm2(x);
    max_norm = std::max(max_norm, nx);
    if (nx >= eps) realized += nx * nx;

    const double l1 = o.abs1_tail(k, eps), l2 = o.m2_tail(k, eps);
    clb1 += l1;
    clb2 += l2;
    if (!within(l1, l2 / eps)) detail::fail(c2, k + 1, l1, l2 / eps);

    double comp_hi = 0.0, comp_lo = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double cj = o.component_m2_tail(k, j, eps);
      const double cl = o.component_m2_tail(k, j, eps_c);
      comp_sum_j[j] += cj;
      comp_small_j[j] += cl;
      comp_hi = std::max(comp_hi, cj);
      comp_lo += cl;
    }
    if (!within(comp_hi, l2)) detail::fail(c3, k + 1, comp_hi, l2);
    if (!within(l2, 2.0 * static_cast<double>(d) * comp_lo))
      detail::fail(c3, k + 1, l2, 2.0 * static_cast<double>(d) * comp_lo);

    for (const auto& u : us) {
      const double lhs = std::abs(dot(u, x)), rhs = norm2(u) * nx;
      if (!within(lhs, rhs)) detail::fail(c4, k + 1, lhs, rhs);
    }

    const double ny = norm2(t.at(k));
    rep.max_truncated_norm = std::max(rep.max_truncated_norm, ny);
    if (!within(ny, 2.0 * a)) detail::fail(c5, k + 1, ny, 2.0 * a);

    const std::span<const double> comp(t.compensator.data() + k * d, d);
    const double strict = o.abs1_tail_strict(k, a);
    strict_sum += strict;
    for (std::size_t j = 0; j < d; ++j) comp_total[j] += comp[j];
    if (!within(norm2(comp), strict)) detail::fail(c6, k + 1, norm2(comp), strict);
  }

  if (realized > 0.0 && max_norm < eps) detail::fail(c1, 0, eps, max_norm);
  if (!within(clb1, clb2 / eps)) detail::fail(c2, 0, clb1, clb2 / eps);
  double upper = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (!within(comp_sum_j[j], clb2)) detail::fail(c3, 0, comp_sum_j[j], clb2);
    upper += comp_small_j[j];
  }
  upper *= 2.0 * static_cast<double>(d);
  if (!within(clb2, upper)) detail::fail(c3, 0, clb2, upper);
  if (!within(norm2(comp_total), strict_sum)) detail::fail(c6, 0, norm2(comp_total), strict_sum);

  // Truncation identity sum x - sum y = ta_residual.
  for (std::size_t j = 0; j < d; ++j) {
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < kn; ++k) {
      sx += row.x(k)[j];
      sy += t.at(k)[j];
    }
    rep.identity_error = std::max(rep.identity_error, std::abs(sx - sy - ts.ta_residual[j]));
  }
  return rep;
}

}  // namespace mdclt
