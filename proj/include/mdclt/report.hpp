#pragma once

// JSON summaries and CSV extracts. CSV files are UTF-8 with LF line ends,
// '.' decimals and a mandatory header row; doubles are printed with 17
// significant digits so that reruns compare byte for byte.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdclt/ar_process.hpp"
#include "mdclt/config.hpp"
#include "mdclt/diagnostics.hpp"
#include "mdclt/matrix.hpp"
#include "mdclt/stable_test.hpp"
#include "mdclt/version.hpp"

namespace mdclt {

using nlohmann::json;

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < m.dim(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}
inline json to_json(const SymMat& m) { return to_json(m.mat()); }
inline json to_json(const Vec& v) { return json(v); }

inline json report_meta(const std::string& config_hash, std::uint64_t seed) {
  return {{"artifact_version", kVersion},
          {"schema_version", kSchemaVersion},
          {"config_hash", config_hash},
          {"seed", seed}};
}

inline json seeds_manifest(std::uint64_t seed, std::size_t replications) {
  return {{"seed", seed},
          {"replications", replications},
          {"substream", "xoshiro256++ seeded by splitmix64 expansion of splitmix64_mix(seed ^ r)"}};
}

inline json to_json(const KsResult& k) {
  return {{"statistic", k.statistic}, {"p_value", k.p_value}, {"sample_size", k.sample_size}};
}

inline json to_json(const StabilityConstants& s) {
  return {{"kappa1", s.kappa1},        {"kappa2", s.kappa2},         {"kappa3", s.kappa3},
          {"tail_bound", s.tail_bound}, {"tail_bound_sq", s.tail_bound_sq},
          {"terms", s.terms},           {"window", s.window}};
}

inline json to_json(const SigmaResult& s) {
  return {{"sigma", to_json(s.sigma)},
          {"terms_used", s.terms_used},
          {"tail_bound", s.tail_bound},
          {"head", to_json(s.head)},
          {"spectral_radius", s.spectral_radius}};
}

/// Everything compute-sigma reports: Sigma, its inverse and square roots,
/// the head matrix, stability constants and a Lyapunov cross-check.
inline json sigma_report(const ArParams& p, double tol) {
  const SigmaResult s = sigma_series(p, tol);
  const Mat b = companion(p);
  const SymMat inv = inverse(s.sigma);
  const SymMat lyap = solve_lyapunov(b, SymMat(Mat::corner(p.order())));
  json j = to_json(s);
  j["theta"] = p.theta();
  j["d"] = p.order();
  j["tol"] = tol;
  j["sigma_inverse"] = to_json(inv);
  j["sigma_sqrt"] = to_json(psd_sqrt(s.sigma));
  j["sigma_inverse_sqrt"] = to_json(psd_sqrt(inv));
  j["stability"] = to_json(stability_constants(b));
  j["lyapunov"] = to_json(lyap);
  j["lyapunov_difference"] = frobenius_norm(s.sigma.mat() - lyap.mat());
  return j;
}

inline json to_json(const MixingReport& m) {
  json cells = json::array();
  for (const auto& c : m.cells)
    cells.push_back({{"component", c.component + 1},
                     {"bucket", c.bucket},
                     {"bucket_size", c.bucket_size},
                     {"rest_size", c.rest_size},
                     {"ks", to_json(c.ks)},
                     {"rejected", c.rejected}});
  return {{"alpha", m.alpha},
          {"hypotheses", m.hypotheses},
          {"min_p_value", m.min_p_value},
          {"passed", m.passed},
          {"cells", cells}};
}

inline json to_json(const DecayReport& d) {
  json rows = json::array();
  for (const auto& r : d.rows) {
    json row = {{"statistic", r.statistic.family},
                {"median", r.median},
                {"p90", r.p90},
                {"strictly_decreasing", r.strictly_decreasing},
                {"gated", r.gated},
                {"passed", r.passed}};
    row["eps"] = std::isnan(r.statistic.eps) ? json(nullptr) : json(r.statistic.eps);
    row["threshold"] = r.threshold ? json(*r.threshold) : json(nullptr);
    rows.push_back(std::move(row));
  }
  return {{"n_grid", d.n_grid}, {"rows", rows}, {"passed", d.passed}};
}

inline json to_json(const AuditSummary& a) {
  json v = json::array();
  for (const auto& x : a.violations)
    v.push_back({{"replication", x.replication},
                 {"n", x.n},
                 {"eps", x.eps},
                 {"check", x.check},
                 {"k", x.k},
                 {"detail", x.detail}});
  return {{"rows_audited", a.rows_audited},
          {"violation_count", a.violation_count},
          {"violations", v},
          {"max_identity_error", a.max_identity_error},
          {"max_truncated_ratio", a.max_truncated_ratio},
          {"passed", a.passed()}};
}

inline json summary_json(const McSummary& s, const ExperimentConfig& cfg) {
  json j = report_meta(cfg.hash, cfg.mc.seed);
  j["command"] = "verify-clt";
  j["config"] = cfg.raw;
  j["seeds"] = seeds_manifest(cfg.mc.seed, cfg.mc.replications);
  j["sigma"] = to_json(s.sigma);
  j["sigma_inverse"] = to_json(s.sigma_inverse);
  json per_n = json::array();
  for (const auto& p : s.per_n) {
    json ks = json::array();
    for (const auto& k : p.ks) ks.push_back(to_json(k));
    per_n.push_back({{"n", p.n},
                     {"clt_mean", p.clt_mean},
                     {"clt_cov", to_json(p.clt_cov)},
                     {"clt_cov_error", p.clt_cov_error},
                     {"self_count", p.self_count},
                     {"self_mean", p.self_mean},
                     {"self_cov", to_json(p.self_cov)},
                     {"self_cov_error", std::isfinite(p.self_cov_error)
                                            ? json(p.self_cov_error)
                                            : json(nullptr)},
                     {"ks", ks},
                     {"omega_frequency", p.omega_frequency}});
  }
  j["per_n"] = per_n;
  j["mixing"] = to_json(s.mixing);
  if (s.decay) j["decay"] = to_json(*s.decay);
  json records = json::array();
  for (const auto& r : s.records)
    records.push_back({{"replication", r.replication},
                       {"n", r.n},
                       {"w", r.w},
                       {"gram_pd", r.gram_pd},
                       {"clt", r.clt},
                       {"self_normalized", r.gram_pd ? json(r.self_normalized) : json(nullptr)}});
  j["records"] = records;
  j["verdict"] = {{"ks", s.verdict.ks},
                  {"covariance", s.verdict.covariance},
                  {"self_normalized", s.verdict.self_normalized},
                  {"mixing", s.verdict.mixing},
                  {"result", s.verdict.passed() ? "PASS" : "FAIL"}};
  return j;
}

inline json diagnostics_json(const DiagnosticsSummary& s, const ExperimentConfig& cfg) {
  json j = report_meta(cfg.hash, cfg.mc.seed);
  j["command"] = "diagnose-conditions";
  j["config"] = cfg.raw;
  j["seeds"] = seeds_manifest(cfg.mc.seed, cfg.mc.replications);
  j["sigma"] = to_json(s.sigma);
  j["limit"] = to_json(s.limit);
  j["decay"] = to_json(s.decay);
  if (s.audit) j["audit"] = to_json(*s.audit);
  const bool ok = s.decay.passed && (!s.audit || s.audit->passed());
  j["verdict"] = {{"decay", s.decay.passed},
                  {"audit", s.audit ? json(s.audit->passed()) : json(nullptr)},
                  {"result", ok ? "PASS" : "FAIL"}};
  return j;
}

inline json omega_json(const OmegaReport& r, const ExperimentConfig& cfg) {
  json j = report_meta(cfg.hash, cfg.mc.seed);
  j["command"] = "rank-demo";
  j["config"] = cfg.raw;
  j["seeds"] = seeds_manifest(cfg.mc.seed, cfg.mc.replications);
  j["case"] = {{"name", rank_case_name(r.rank_case.kind)},
               {"p0", r.rank_case.p0},
               {"p_u0", r.rank_case.p_u0}};
  j["d"] = r.d;
  json rows = json::array();
  for (const auto& o : r.rows)
    rows.push_back({{"n", o.n},
                    {"count", o.count},
                    {"frequency", o.frequency},
                    {"checked", o.checked},
                    {"bound", o.bound},
                    {"se", o.se},
                    {"passed", o.passed}});
  j["rows"] = rows;
  j["monotone"] = r.monotone;
  j["verdict"] = {{"result", r.passed ? "PASS" : "FAIL"}};
  return j;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_number(std::size_t v) { return std::to_string(v); }

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out) {
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ostream& out_;
};

inline void write_statistics_csv(std::ostream& out, const McSummary& s) {
  std::vector<std::string> header{"replication", "n", "w", "gram_pd"};
  for (std::size_t j = 1; j <= s.d; ++j) header.push_back("clt_" + std::to_string(j));
  for (std::size_t j = 1; j <= s.d; ++j) header.push_back("self_normalized_" + std::to_string(j));
  CsvWriter csv(out, header);
  for (const auto& r : s.records) {
    std::vector<std::string> cells{csv_number(r.replication), csv_number(r.n), csv_number(r.w),
                                   r.gram_pd ? "1" : "0"};
    for (double v : r.clt) cells.push_back(csv_number(v));
    for (std::size_t j = 0; j < s.d; ++j)
      cells.push_back(r.gram_pd ? csv_number(r.self_normalized[j]) : "");
    csv.row(cells);
  }
}

inline void write_per_n_csv(std::ostream& out, const McSummary& s) {
  std::vector<std::string> header{"n", "clt_cov_error", "self_cov_error", "self_count",
                                  "omega_frequency"};
  for (std::size_t j = 1; j <= s.d; ++j) {
    header.push_back("ks_statistic_" + std::to_string(j));
    header.push_back("ks_p_value_" + std::to_string(j));
  }
  for (std::size_t i = 1; i <= s.d; ++i)
    for (std::size_t j = 1; j <= s.d; ++j)
      header.push_back("clt_cov_" + std::to_string(i) + "_" + std::to_string(j));
  CsvWriter csv(out, header);
  for (const auto& p : s.per_n) {
    std::vector<std::string> cells{csv_number(p.n), csv_number(p.clt_cov_error),
                                   std::isfinite(p.self_cov_error) ? csv_number(p.self_cov_error)
                                                                   : "",
                                   csv_number(p.self_count), csv_number(p.omega_frequency)};
    for (const auto& k : p.ks) {
      cells.push_back(csv_number(k.statistic));
      cells.push_back(csv_number(k.p_value));
    }
    for (std::size_t i = 0; i < s.d; ++i)
      for (std::size_t j = 0; j < s.d; ++j) cells.push_back(csv_number(p.clt_cov(i, j)));
    csv.row(cells);
  }
}

inline void write_mixing_csv(std::ostream& out, const MixingReport& m) {
  CsvWriter csv(out, {"component", "bucket", "bucket_size", "rest_size", "statistic",
                      "p_value", "rejected"});
  for (const auto& c : m.cells)
    csv.row({csv_number(c.component + 1), csv_number(c.bucket), csv_number(c.bucket_size),
             csv_number(c.rest_size), csv_number(c.ks.statistic), csv_number(c.ks.p_value),
             c.rejected ? "1" : "0"});
}

inline std::vector<std::string> decay_csv_header() {
  return {"statistic", "eps", "n", "median", "p90"};
}

inline void write_decay_csv(std::ostream& out, const DecayReport& d) {
  CsvWriter csv(out, decay_csv_header());
  for (const auto& r : d.rows)
    for (std::size_t i = 0; i < d.n_grid.size(); ++i)
      csv.row({r.statistic.family, csv_number(r.statistic.eps), csv_number(d.n_grid[i]),
               csv_number(r.median[i]), csv_number(r.p90[i])});
}

inline std::vector<std::string> decay_verdict_csv_header() {
  return {"statistic", "eps", "strictly_decreasing", "threshold", "final_median", "gated",
          "passed"};
}

inline void write_decay_verdict_csv(std::ostream& out, const DecayReport& d) {
  CsvWriter csv(out, decay_verdict_csv_header());
  for (const auto& r : d.rows)
    csv.row({r.statistic.family, csv_number(r.statistic.eps), r.strictly_decreasing ? "1" : "0",
             r.threshold ? csv_number(*r.threshold) : "", csv_number(r.median.back()),
             r.gated ? "1" : "0", r.passed ? "1" : "0"});
}

inline std::vector<std::string> conditions_csv_header(std::size_t d) {
  std::vector<std::string> h{"replication"};
  const auto cols = condition_columns(d);
  h.insert(h.end(), cols.begin(), cols.end());
  return h;
}

inline void write_conditions_csv(std::ostream& out, const DiagnosticsSummary& s, std::size_t d) {
  CsvWriter csv(out, conditions_csv_header(d));
  for (std::size_t r = 0; r < s.reports.size(); ++r)
    for (const auto& rep : s.reports[r])
      for (std::size_t e = 0; e < rep.eps.size(); ++e) {
        std::vector<std::string> cells{csv_number(r)};
        const Vec v = condition_values(rep, e);
        cells.push_back(csv_number(rep.n));
        for (std::size_t i = 1; i < v.size(); ++i) cells.push_back(csv_number(v[i]));
        csv.row(cells);
      }
}

inline void write_omega_csv(std::ostream& out, const OmegaReport& r) {
  CsvWriter csv(out, {"n", "count", "frequency", "checked", "bound", "se", "passed"});
  for (const auto& o : r.rows)
    csv.row({csv_number(o.n), csv_number(o.count), csv_number(o.frequency),
             o.checked ? "1" : "0", csv_number(o.bound), csv_number(o.se),
             o.passed ? "1" : "0"});
}

inline void write_path_csv(std::ostream& out, const ArPath& p) {
  CsvWriter csv(out, {"k", "Y_k", "Z_k"});
  for (std::size_t k = 1; k <= p.length(); ++k)
    csv.row({csv_number(k), csv_number(p.y(static_cast<long>(k))), csv_number(p.z(k))});
}

}  // namespace mdclt
