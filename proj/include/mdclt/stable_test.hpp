#pragma once

// Seeded Monte Carlo harness: replications of an AR(d) model, the two
// least-squares statistics at every horizon of a grid, Kolmogorov-Smirnov
// tests against N(0, 1) after standardization, a bucketed independence
// (mixing) test, condition-statistic decay tables and the rank examples.
//
// Replication r draws everything from RngStream::substream(seed, r) in this
// order: initial value, Z_1..Z_N for the largest horizon N, then audit
// probes. Horizons are prefixes of one path per replication.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdclt/ar_process.hpp"
#include "mdclt/diagnostics.hpp"
#include "mdclt/error.hpp"
#include "mdclt/innovations.hpp"
#include "mdclt/matrix.hpp"
#include "mdclt/parallel.hpp"
#include "mdclt/rng.hpp"

namespace mdclt {

enum class ConditioningKind { SignZ1, FirstCoordU0Positive, U0InBall };

struct Conditioning {
  ConditioningKind kind = ConditioningKind::SignZ1;
  double radius = 1.0;  // U0InBall only
};

enum class InitialKind { Zero, Fixed, Stationary };

struct InitialSpec {
  InitialKind kind = InitialKind::Zero;
  Vec value;          // Fixed only
  double tol = 1e-12; // Stationary only
};

struct Thresholds {
  double alpha = 0.01;
  double covariance_rel = 0.15;
  double self_normalized_rel = 0.10;
  /// Largest-horizon median bounds per decay family, e.g. {"clb2": 1e-3}.
  std::map<std::string, double> decay;
  /// Decay families that enter the verdict; empty means all of them.
  std::vector<std::string> decay_gate;
};

struct McConfig {
  ArParams model;
  InnovationSpec innovation;
  std::vector<std::size_t> n_grid{};
  std::size_t replications = 2;
  std::uint64_t seed = 0;
  Conditioning conditioning{};
  double truncation_a = 1.0;
  Vec eps_grid{0.1};
  InitialSpec initial{};
  Thresholds thresholds{};
  double sigma_tol = 1e-13;
  bool condition_reports = false;

  /// Throws ConfigError naming the offending field.
  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (replications < 2) fail("replications: must be >= 2");
    if (n_grid.empty()) fail("n_grid: must not be empty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] < 1) fail("n_grid: horizons must be >= 1");
      if (i > 0 && n_grid[i] <= n_grid[i - 1]) fail("n_grid: must be strictly increasing");
    }
    if (eps_grid.empty()) fail("eps_grid: must not be empty");
    for (double e : eps_grid)
      if (!(e > 0.0) || !std::isfinite(e)) fail("eps_grid: values must be finite and > 0");
    if (!(truncation_a > 0.0) || !std::isfinite(truncation_a))
      fail("truncation_a: must be finite and > 0");
    if (!(sigma_tol > 0.0)) fail("sigma_tol: must be > 0");
    if (initial.kind == InitialKind::Fixed && initial.value.size() != model.order())
      fail("initial.value: must have d entries");
    if (initial.kind == InitialKind::Stationary && !(initial.tol > 0.0))
      fail("initial.tol: must be > 0");
    if (conditioning.kind == ConditioningKind::U0InBall && !(conditioning.radius > 0.0))
      fail("conditioning.radius: must be > 0");
    const Thresholds& t = thresholds;
    if (!(t.alpha > 0.0 && t.alpha < 1.0)) fail("thresholds.alpha: must be in (0, 1)");
    if (!(t.covariance_rel > 0.0)) fail("thresholds.covariance_rel: must be > 0");
    if (!(t.self_normalized_rel > 0.0)) fail("thresholds.self_normalized_rel: must be > 0");
    for (const auto& [k, v] : t.decay)
      if (!(v > 0.0)) fail("thresholds.decay." + k + ": must be > 0");
  }

  std::size_t max_n() const { return n_grid.back(); }
};

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

struct KsResult {
  double statistic = 0.0;  // sqrt(m) sup |F_m - F|
  double p_value = 1.0;
  std::size_t sample_size = 0;
};

/// P(K > t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2), summed until a term
/// drops below 1e-12.
inline double kolmogorov_sf(double t) {
  if (!(t > 0.0)) return 1.0;
  double s = 0.0;
  for (int k = 1; k < 1000000; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

template <typename Cdf>
KsResult ks_test(std::span<const double> sample, Cdf&& cdf) {
  const std::size_t m = sample.size();
  if (m < 8) throw TooFewSamples("ks_test: need at least 8 samples");
  Vec s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  double d = 0.0;
  const double mm = static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / mm - f, f - static_cast<double>(i) / mm});
  }
  const double stat = std::sqrt(mm) * d;
  return {stat, kolmogorov_sf(stat), m};
}

inline KsResult ks_test(std::span<const double> sample) {
  return ks_test(sample, std_normal_cdf);
}

/// Two-sample test; the statistic is scaled by sqrt(m n / (m + n)).
inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw TooFewSamples("ks_two_sample: empty sample");
  Vec x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double m = static_cast<double>(x.size()), n = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n));
  }
  const double stat = std::sqrt(m * n / (m + n)) * d;
  return {stat, kolmogorov_sf(stat), x.size() + y.size()};
}

/// v -> Sigma^{1/2} v, so that N(0, Sigma^{-1}) becomes N(0, I).
inline std::vector<Vec> standardize(const std::vector<Vec>& samples, const SymMat& sigma) {
  if (!is_positive_definite(sigma)) throw NotPd("standardize: sigma is not positive definite");
  const SymMat root = psd_sqrt(sigma);
  std::vector<Vec> out;
  out.reserve(samples.size());
  for (const Vec& v : samples) out.push_back(root.mat() * v);
  return out;
}

// ---------------------------------------------------------------------------
// Mixing

struct MixingCell {
  std::size_t component = 0;  // 0-based
  double bucket = 0.0;        // value of W
  std::size_t bucket_size = 0;
  std::size_t rest_size = 0;
  KsResult ks;
  bool rejected = false;
};

struct MixingReport {
  double alpha = 0.0;
  std::size_t hypotheses = 0;
  double min_p_value = 1.0;
  bool passed = true;
  std::vector<MixingCell> cells;
};

/// For every component and every bucket of W, a two-sample KS test of the
/// bucket against the pooled complement; Bonferroni over all pairs.
inline MixingReport mixing_test(const std::vector<Vec>& samples, std::span<const double> w,
                                double alpha) {
  if (samples.size() != w.size()) throw std::invalid_argument("mixing_test: size mismatch");
  if (samples.empty()) throw BucketTooSmall("mixing_test: no samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("mixing_test: alpha in (0, 1)");
  const std::size_t d = samples.front().size();
  Vec buckets(w.begin(), w.end());
  std::sort(buckets.begin(), buckets.end());
  buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
  if (buckets.size() < 2) throw BucketTooSmall("mixing_test: W takes a single value");
  for (double b : buckets) {
    const auto cnt = static_cast<std::size_t>(std::count(w.begin(), w.end(), b));
    if (cnt < 8 * d)
      throw BucketTooSmall("mixing_test: bucket W=" + std::to_string(b) + " has " +
                           std::to_string(cnt) + " samples, need " + std::to_string(8 * d));
  }
  MixingReport rep;
  rep.alpha = alpha;
  rep.hypotheses = d * buckets.size();
  const double level = alpha / static_cast<double>(rep.hypotheses);
  for (std::size_t j = 0; j < d; ++j)
    for (double b : buckets) {
      Vec in, out;
      for (std::size_t r = 0; r < samples.size(); ++r)
        (w[r] == b ? in : out).push_back(samples[r][j]);
      MixingCell c{j, b, in.size(), out.size(), ks_two_sample(in, out), false};
      c.rejected = c.ks.p_value < level;
      rep.min_p_value = std::min(rep.min_p_value, c.ks.p_value);
      rep.passed = rep.passed && !c.rejected;
      rep.cells.push_back(c);
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Sample moments and quantiles

inline Vec sample_mean(const std::vector<Vec>& xs, std::size_t d) {
  Vec m(d, 0.0);
  for (const Vec& x : xs)
    for (std::size_t j = 0; j < d; ++j) m[j] += x[j];
  if (!xs.empty())
    for (double& v : m) v /= static_cast<double>(xs.size());
  return m;
}

/// Unbiased sample covariance; zero when fewer than two samples.
inline SymMat sample_covariance(const std::vector<Vec>& xs, std::size_t d) {
  Mat c(d);
  if (xs.size() < 2) return SymMat::symmetrize(c);
  const Vec m = sample_mean(xs, d);
  for (const Vec& x : xs) {
    const Vec dx = x - m;
    c.add_outer(dx, dx);
  }
  c *= 1.0 / static_cast<double>(xs.size() - 1);
  return SymMat::symmetrize(c);
}

/// Linear-interpolation quantile (type 7).
inline double quantile(Vec v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---------------------------------------------------------------------------
// Decay tables

struct DecayStatistic {
  std::string family;  // clb1, clb2, ta_residual_norm, tma, tma_sq, ...
  double eps = std::numeric_limits<double>::quiet_NaN();  // only for clb1/clb2
};

inline std::vector<DecayStatistic> decay_statistics(std::span<const double> eps_grid) {
  std::vector<DecayStatistic> s;
  for (double e : eps_grid) s.push_back({"clb1", e});
  for (double e : eps_grid) s.push_back({"clb2", e});
  for (const char* f : {"raikov_error", "norming_error", "ta_residual_norm", "tma", "tma_sq",
                        "max_norm_sq"})
    s.push_back({f});
  return s;
}

/// Values in decay_statistics order. `limit` is the common limit of the
/// Raikov and norming matrices, (sigma^2)^2 Sigma for an AR row.
inline Vec decay_values(const ConditionReport& r, const SymMat& limit) {
  Vec v;
  v.insert(v.end(), r.clb1.begin(), r.clb1.end());
  v.insert(v.end(), r.clb2.begin(), r.clb2.end());
  v.push_back(frobenius_norm(r.raikov.mat() - limit.mat()));
  v.push_back(frobenius_norm(r.norming.mat() - limit.mat()));
  v.push_back(norm2(r.ta_residual));
  v.push_back(r.tma);
  v.push_back(r.tma * r.tma);
  v.push_back(r.max_norm_sq);
  return v;
}

struct DecayRow {
  DecayStatistic statistic;
  Vec median;  // per horizon
  Vec p90;     // per horizon
  bool strictly_decreasing = false;
  std::optional<double> threshold;
  bool gated = true;
  bool passed = false;
};

struct DecayReport {
  std::vector<std::size_t> n_grid;
  std::vector<DecayRow> rows;
  bool passed = true;
};

/// values[r][i][s]: replication r, horizon i, statistic s.
inline DecayReport build_decay_report(const McConfig& cfg,
                                      const std::vector<std::vector<Vec>>& values) {
  DecayReport rep;
  rep.n_grid = cfg.n_grid;
  const auto stats = decay_statistics(cfg.eps_grid);
  const auto& gate = cfg.thresholds.decay_gate;
  for (std::size_t s = 0; s < stats.size(); ++s) {
    DecayRow row{stats[s], {}, {}, true, std::nullopt, true, false};
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
      Vec column;
      column.reserve(values.size());
      for (const auto& rep_values : values) column.push_back(rep_values[i][s]);
      row.median.push_back(quantile(column, 0.5));
      row.p90.push_back(quantile(column, 0.9));
      if (i > 0 && !(row.median[i] < row.median[i - 1])) row.strictly_decreasing = false;
    }
    if (auto it = cfg.thresholds.decay.find(stats[s].family); it != cfg.thresholds.decay.end())
      row.threshold = it->second;
    row.gated = gate.empty() || std::find(gate.begin(), gate.end(), stats[s].family) != gate.end();
    row.passed = row.strictly_decreasing && (!row.threshold || row.median.back() < *row.threshold);
    if (row.gated && !row.passed) rep.passed = false;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Replications

struct ReplicationRecord {
  std::size_t replication = 0;
  std::size_t n = 0;
  double w = 0.0;
  bool gram_pd = false;
  Vec clt;              // sqrt(n)(theta_hat - theta)
  Vec self_normalized;  // empty when the Gram matrix is singular
};

struct PerNSummary {
  std::size_t n = 0;
  Vec clt_mean;
  SymMat clt_cov;
  double clt_cov_error = 0.0;  // ||Cov - Sigma^{-1}||_F / ||Sigma^{-1}||_F
  std::size_t self_count = 0;
  Vec self_mean;
  SymMat self_cov;
  double self_cov_error = 0.0;  // ||Cov - sigma^2 I||_F / ||sigma^2 I||_F
  std::vector<KsResult> ks;     // per component of Sigma^{1/2} sqrt(n)(theta_hat - theta)
  double omega_frequency = 0.0;
};

struct Verdict {
  bool ks = false;
  bool covariance = false;
  bool self_normalized = false;
  bool mixing = false;
  bool passed() const { return ks && covariance && self_normalized && mixing; }
};

struct McSummary {
  std::size_t d = 0;
  SigmaResult sigma;
  SymMat sigma_inverse;
  std::vector<ReplicationRecord> records;  // replication-major, then horizon
  std::vector<PerNSummary> per_n;
  MixingReport mixing;  // at the largest horizon
  std::optional<DecayReport> decay;
  Verdict verdict;
};

namespace detail {

inline Vec draw_initial(const McConfig& cfg, RngStream& rng) {
  switch (cfg.initial.kind) {
    case InitialKind::Zero:
      return Vec(cfg.model.order(), 0.0);
    case InitialKind::Fixed:
      return cfg.initial.value;
    case InitialKind::Stationary:
      return stationary_initial(cfg.model, cfg.innovation, cfg.initial.tol, rng).value;
  }
  return {};
}

inline double conditioning_value(const Conditioning& c, const ArPath& path) {
  switch (c.kind) {
    case ConditioningKind::SignZ1: {
      const double z = path.z(1);
      return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
    }
    case ConditioningKind::FirstCoordU0Positive:
      return path.state(0)[0] > 0.0 ? 1.0 : 0.0;
    case ConditioningKind::U0InBall:
      return norm2(path.state(0)) <= c.radius ? 1.0 : 0.0;
  }
  return 0.0;
}

inline ArPath draw_path(const McConfig& cfg, std::span<const double> u0, std::size_t r,
                        RngStream& rng) {
  try {
    return simulate(cfg.model, cfg.innovation, u0, cfg.max_n(), rng);
  } catch (const Overflow& e) {
    throw Overflow(e.step(), e.value(), r);
  }
}

struct ReplicationOutput {
  std::vector<ReplicationRecord> records;
  std::vector<Vec> decay;  // per horizon
};

}  // namespace detail

inline McSummary run_experiment(const McConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  const std::size_t d = cfg.model.order();
  McSummary out;
  out.d = d;
  out.sigma = sigma_series(cfg.model, cfg.sigma_tol);
  out.sigma_inverse = inverse(out.sigma.sigma);
  const SymMat root = psd_sqrt(out.sigma.sigma);
  const double var = cfg.innovation.variance();
  const SymMat limit = SymMat::symmetrize(out.sigma.sigma.mat() * (var * var));

  std::vector<detail::ReplicationOutput> reps(cfg.replications);
  parallel_for(cfg.replications, workers, [&](std::size_t r) {
    RngStream rng = RngStream::substream(cfg.seed, r);
    const Vec u0 = detail::draw_initial(cfg, rng);
    const ArPath path = detail::draw_path(cfg, u0, r, rng);
    const double w = detail::conditioning_value(cfg.conditioning, path);
    LsAccumulator acc(d);
    auto& o = reps[r];
    for (std::size_t n : cfg.n_grid) {
      acc.advance(path, n);
      ReplicationRecord rec{r, n, w, false, clt_statistic(acc, cfg.model), {}};
      rec.gram_pd = acc.full_rank();
      if (rec.gram_pd) rec.self_normalized = self_normalized_statistic(acc, cfg.model);
      o.records.push_back(std::move(rec));
      if (cfg.condition_reports) {
        const ArrayRow row = build_ar_row(path, cfg.model, cfg.innovation, n);
        o.decay.push_back(
            decay_values(condition_report(row, cfg.eps_grid, cfg.truncation_a), limit));
      }
    }
  });

  const std::size_t g = cfg.n_grid.size();
  const double inv_norm = frobenius_norm(out.sigma_inverse);
  const double self_norm = var * std::sqrt(static_cast<double>(d));
  std::vector<Vec> last_standardized;
  Vec last_w;
  for (std::size_t i = 0; i < g; ++i) {
    std::vector<Vec> clt, self;
    std::size_t pd = 0;
    for (const auto& rep : reps) {
      const ReplicationRecord& rec = rep.records[i];
      clt.push_back(rec.clt);
      if (rec.gram_pd) {
        self.push_back(rec.self_normalized);
        ++pd;
      }
    }
    PerNSummary s;
    s.n = cfg.n_grid[i];
    s.clt_mean = sample_mean(clt, d);
    s.clt_cov = sample_covariance(clt, d);
    s.clt_cov_error = frobenius_norm(s.clt_cov.mat() - out.sigma_inverse.mat()) / inv_norm;
    s.self_count = self.size();
    s.self_mean = sample_mean(self, d);
    s.self_cov = sample_covariance(self, d);
    s.self_cov_error = self.size() < 2
                           ? std::numeric_limits<double>::infinity()
                           : frobenius_norm(s.self_cov.mat() - Mat::identity(d) * var) / self_norm;
    s.omega_frequency = static_cast<double>(pd) / static_cast<double>(reps.size());
    std::vector<Vec> standardized;
    standardized.reserve(clt.size());
    for (const Vec& v : clt) standardized.push_back(root.mat() * v);
    for (std::size_t j = 0; j < d; ++j) {
      Vec comp;
      comp.reserve(standardized.size());
      for (const Vec& v : standardized) comp.push_back(v[j]);
      s.ks.push_back(ks_test(comp));
    }
    out.per_n.push_back(std::move(s));
    if (i + 1 == g) {
      last_standardized = std::move(standardized);
      for (const auto& rep : reps) last_w.push_back(rep.records[i].w);
    }
  }
  out.mixing = mixing_test(last_standardized, last_w, cfg.thresholds.alpha);

  for (auto& rep : reps)
    for (auto& rec : rep.records) out.records.push_back(std::move(rec));

  if (cfg.condition_reports) {
    std::vector<std::vector<Vec>> values;
    values.reserve(reps.size());
    for (auto& rep : reps) values.push_back(std::move(rep.decay));
    out.decay = build_decay_report(cfg, values);
  }

  const PerNSummary& last = out.per_n.back();
  double min_p = 1.0;
  for (const auto& k : last.ks) min_p = std::min(min_p, k.p_value);
  out.verdict.ks = min_p > cfg.thresholds.alpha / static_cast<double>(d);
  out.verdict.covariance = last.clt_cov_error <= cfg.thresholds.covariance_rel;
  out.verdict.self_normalized = last.self_cov_error <= cfg.thresholds.self_normalized_rel;
  out.verdict.mixing = out.mixing.passed;
  return out;
}

// ---------------------------------------------------------------------------
// Condition diagnostics across replications

struct AuditViolation {
  std::size_t replication = 0;
  std::size_t n = 0;
  double eps = 0.0;
  std::string check;
  std::size_t k = 0;
  std::string detail;
};

struct AuditSummary {
  std::size_t rows_audited = 0;
  std::size_t violation_count = 0;
  std::vector<AuditViolation> violations;  // first 100
  double max_identity_error = 0.0;
  double max_truncated_ratio = 0.0;  // max ||y_k|| / (2a)
  bool passed() const { return violation_count == 0; }
};

struct DiagnosticsSummary {
  SigmaResult sigma;
  SymMat limit;  // (sigma^2)^2 Sigma
  DecayReport decay;
  std::optional<AuditSummary> audit;
  /// reports[r][i]: replication r at horizon n_grid[i].
  std::vector<std::vector<ConditionReport>> reports;
};

inline DiagnosticsSummary run_diagnostics(const McConfig& cfg, std::size_t workers = 1,
                                          bool audit = true) {
  cfg.validate();
  DiagnosticsSummary out;
  out.sigma = sigma_series(cfg.model, cfg.sigma_tol);
  const double var = cfg.innovation.variance();
  out.limit = SymMat::symmetrize(out.sigma.sigma.mat() * (var * var));

  struct Rep {
    std::vector<ConditionReport> reports;
    std::vector<Vec> values;
    AuditSummary audit;
  };
  std::vector<Rep> reps(cfg.replications);
  parallel_for(cfg.replications, workers, [&](std::size_t r) {
    RngStream rng = RngStream::substream(cfg.seed, r);
    const Vec u0 = detail::draw_initial(cfg, rng);
    const ArPath path = detail::draw_path(cfg, u0, r, rng);
    Rep& o = reps[r];
    for (std::size_t n : cfg.n_grid) {
      const ArrayRow row = build_ar_row(path, cfg.model, cfg.innovation, n);
      ConditionReport rep = condition_report(row, cfg.eps_grid, cfg.truncation_a);
      o.values.push_back(decay_values(rep, out.limit));
      o.reports.push_back(std::move(rep));
      if (!audit) continue;
      for (double eps : cfg.eps_grid) {
        const AuditReport a = inequality_audit(row, eps, cfg.truncation_a, rng);
        ++o.audit.rows_audited;
        o.audit.max_identity_error = std::max(o.audit.max_identity_error, a.identity_error);
        o.audit.max_truncated_ratio =
            std::max(o.audit.max_truncated_ratio, a.max_truncated_norm / (2.0 * cfg.truncation_a));
        for (const auto& c : a.checks)
          if (!c.passed) {
            ++o.audit.violation_count;
            o.audit.violations.push_back({r, n, eps, c.name, c.k, c.detail});
          }
      }
    }
  });

  std::vector<std::vector<Vec>> values;
  values.reserve(reps.size());
  AuditSummary total;
  for (auto& rep : reps) {
    values.push_back(std::move(rep.values));
    out.reports.push_back(std::move(rep.reports));
    total.rows_audited += rep.audit.rows_audited;
    total.violation_count += rep.audit.violation_count;
    total.max_identity_error = std::max(total.max_identity_error, rep.audit.max_identity_error);
    total.max_truncated_ratio = std::max(total.max_truncated_ratio, rep.audit.max_truncated_ratio);
    for (auto& v : rep.audit.violations)
      if (total.violations.size() < 100) total.violations.push_back(std::move(v));
  }
  out.decay = build_decay_report(cfg, values);
  if (audit) out.audit = std::move(total);
  return out;
}

inline DecayReport decay_report(const McConfig& cfg, std::size_t workers = 1) {
  if (cfg.n_grid.size() < 3) throw ConfigError("n_grid: decay report needs at least 3 horizons");
  return run_diagnostics(cfg, workers, /*audit=*/false).decay;
}

// ---------------------------------------------------------------------------
// Rank examples: frequency of Omega_n = {Gram(n) positive definite}

enum class RankCaseKind { AtomAtZero, ZeroStartContinuous, StationaryContinuous };

struct RankCase {
  RankCaseKind kind = RankCaseKind::ZeroStartContinuous;
  double p0 = 0.5;   // AtomAtZero: P(Z = 0)
  double p_u0 = 1.0; // AtomAtZero: P(U_0 = 0)
};

inline std::string rank_case_name(RankCaseKind k) {
  switch (k) {
    case RankCaseKind::AtomAtZero: return "atom_at_zero";
    case RankCaseKind::ZeroStartContinuous: return "zero_start_continuous";
    case RankCaseKind::StationaryContinuous: return "stationary_continuous";
  }
  return "";
}

struct OmegaRow {
  std::size_t n = 0;
  std::size_t count = 0;  // paths with Gram(n) positive definite
  double frequency = 0.0;
  bool checked = false;
  double bound = 0.0;  // required frequency (1) or lower bound on P(Omega_n^c)
  double se = 0.0;
  bool passed = true;
};

struct OmegaReport {
  RankCase rank_case;
  std::size_t d = 0;
  std::size_t replications = 0;
  std::vector<OmegaRow> rows;
  bool monotone = true;  // per path, Omega_n never switched off again
  bool passed = true;
};

/// AtomAtZero uses ThreePoint(1, p0) innovations and U_0 = 0 with probability
/// p_u0, otherwise the configured initial value. The continuous cases use
/// the configured innovations, which must be continuous, and start at zero
/// or from the stationary law.
inline OmegaReport omega_rank_demo(const RankCase& rc, const McConfig& cfg,
                                   std::size_t workers = 1) {
  cfg.validate();
  const std::size_t d = cfg.model.order();
  InnovationSpec spec = cfg.innovation;
  if (rc.kind == RankCaseKind::AtomAtZero) {
    if (!(rc.p0 >= 0.0 && rc.p0 < 1.0)) throw ConfigError("rank_demo.p0: must be in [0, 1)");
    if (!(rc.p_u0 >= 0.0 && rc.p_u0 <= 1.0)) throw ConfigError("rank_demo.p_u0: must be in [0, 1]");
    spec = InnovationSpec::three_point(1.0, rc.p0);
  } else if (!spec.is_continuous()) {
    throw ConfigError("rank_demo: continuous cases need normal or uniform innovations");
  }
  if (rc.kind == RankCaseKind::StationaryContinuous) require_stable(cfg.model);
  const std::size_t nmax = cfg.max_n();

  std::vector<std::vector<char>> hits(cfg.replications);
  std::vector<char> monotone(cfg.replications, 1);
  parallel_for(cfg.replications, workers, [&](std::size_t r) {
    RngStream rng = RngStream::substream(cfg.seed, r);
    Vec u0(d, 0.0);
    switch (rc.kind) {
      case RankCaseKind::AtomAtZero:
        if (!(rng.uniform() < rc.p_u0)) u0 = detail::draw_initial(cfg, rng);
        break;
      case RankCaseKind::ZeroStartContinuous:
        break;
      case RankCaseKind::StationaryContinuous:
        u0 = stationary_initial(cfg.model, spec, cfg.initial.tol, rng).value;
        break;
    }
    ArPath path;
    try {
      path = simulate(cfg.model, spec, u0, nmax, rng);
    } catch (const Overflow& e) {
      throw Overflow(e.step(), e.value(), r);
    }
    LsAccumulator acc(d);
    std::vector<char> pd(nmax + 1, 0);
    for (std::size_t n = 1; n <= nmax; ++n) {
      acc.advance(path, n);
      pd[n] = acc.full_rank() ? 1 : 0;
      if (pd[n - 1] && !pd[n]) monotone[r] = 0;
    }
    for (std::size_t n : cfg.n_grid) hits[r].push_back(pd[n]);
  });

  OmegaReport rep{rc, d, cfg.replications, {}, true, true};
  for (char m : monotone) rep.monotone = rep.monotone && m;
  const double R = static_cast<double>(cfg.replications);
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
    OmegaRow row;
    row.n = cfg.n_grid[i];
    for (const auto& h : hits) row.count += static_cast<std::size_t>(h[i]);
    row.frequency = static_cast<double>(row.count) / R;
    switch (rc.kind) {
      case RankCaseKind::ZeroStartContinuous:
        row.checked = row.n >= d + 1;
        row.bound = 1.0;
        row.passed = !row.checked || row.count == cfg.replications;
        break;
      case RankCaseKind::StationaryContinuous:
        row.checked = row.n >= 2 * d;
        row.bound = 1.0;
        row.passed = !row.checked || row.count == cfg.replications;
        break;
      case RankCaseKind::AtomAtZero: {
        const double miss = 1.0 - row.frequency;
        row.checked = true;
        row.bound = std::pow(rc.p0, static_cast<double>(row.n)) * rc.p_u0;
        row.se = std::sqrt(miss * (1.0 - miss) / R);
        row.passed = miss >= row.bound - 3.0 * row.se;
        break;
      }
    }
    rep.passed = rep.passed && row.passed;
    rep.rows.push_back(row);
  }
  rep.passed = rep.passed && rep.monotone;
  return rep;
}

}  // namespace mdclt
