// mdclt: config-driven runner for the AR(d) martingale CLT experiments.
//
// Exit codes: 0 PASS, 1 statistical FAIL, 2 model error, 3 numeric
// non-convergence, 4 config or usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdclt/mdclt.hpp"

namespace fs = std::filesystem;
using namespace mdclt;

namespace {

enum Exit { kPass = 0, kFail = 1, kModel = 2, kNonConvergence = 3, kConfig = 4 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  // compute-sigma
  std::vector<double> theta;
  std::optional<std::size_t> d;
  double tol = 1e-13;
  // rank-demo
  std::string rank_case;
  double p0 = 0.5;
  double p_u0 = 1.0;
};

std::size_t resolve_workers(const Options& o, const ExperimentConfig* cfg) {
  if (o.workers) {
    if (*o.workers < 1) throw ConfigError("--workers: must be >= 1");
    return *o.workers;
  }
  if (const char* env = std::getenv("MDCLT_WORKERS"); env && *env) {
    char* end = nullptr;
    const unsigned long long w = std::strtoull(env, &end, 10);
    if (*end != '\0' || w < 1) throw ConfigError("MDCLT_WORKERS: expected a positive integer");
    return static_cast<std::size_t>(w);
  }
  if (cfg && cfg->workers) return *cfg->workers;
  return 1;
}

ExperimentConfig load(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required for this subcommand");
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.mc.seed = *o.seed;
  return cfg;
}

fs::path out_dir(const Options& o, const ExperimentConfig* cfg) {
  fs::path dir = !o.out.empty() ? fs::path(o.out) : fs::path(cfg ? cfg->output.dir : "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError("output directory '" + dir.string() + "' is not writable");
  return dir;
}

template <typename Write>
void write_file(const fs::path& path, Write&& write) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  write(f);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_file(path, [&](std::ostream& f) { f << j.dump(2) << '\n'; });
}

int cmd_compute_sigma(const Options& o) {
  std::optional<ExperimentConfig> cfg;
  ArParams p({0.0});
  nlohmann::json source;
  std::string hash;
  double tol = o.tol;
  if (!o.theta.empty()) {
    p = ArParams(o.theta);
    source = {{"theta", o.theta}, {"tol", tol}};
    hash = fnv1a_hex(source.dump());
  } else {
    cfg = load(o);
    p = cfg->mc.model;
    tol = cfg->mc.sigma_tol;
    source = cfg->raw;
    hash = cfg->hash;
  }
  if (o.d && *o.d != p.order()) throw ConfigError("--d does not match the length of theta");
  const fs::path dir = out_dir(o, cfg ? &*cfg : nullptr);
  nlohmann::json j = report_meta(hash, cfg ? cfg->mc.seed : 0);
  j["command"] = "compute-sigma";
  j["config"] = source;
  j["result"] = sigma_report(p, tol);
  write_json(dir / "summary.json", j);
  std::cout << "sigma written to " << (dir / "summary.json").string() << " (rho = "
            << j["result"]["spectral_radius"].get<double>() << ", J = "
            << j["result"]["terms_used"].get<std::size_t>() << ")\n";
  return kPass;
}

int cmd_verify_clt(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const std::size_t workers = resolve_workers(o, &cfg);
  const fs::path dir = out_dir(o, &cfg);
  const McSummary s = run_experiment(cfg.mc, workers);
  if (cfg.output.json) write_json(dir / "summary.json", summary_json(s, cfg));
  if (cfg.output.csv) {
    write_file(dir / "statistics.csv", [&](std::ostream& f) { write_statistics_csv(f, s); });
    write_file(dir / "per_n.csv", [&](std::ostream& f) { write_per_n_csv(f, s); });
    write_file(dir / "mixing.csv", [&](std::ostream& f) { write_mixing_csv(f, s.mixing); });
    if (s.decay)
      write_file(dir / "decay.csv", [&](std::ostream& f) { write_decay_csv(f, *s.decay); });
  }
  const PerNSummary& last = s.per_n.back();
  double min_p = 1.0;
  for (const auto& k : last.ks) min_p = std::min(min_p, k.p_value);
  std::cout << "n = " << last.n << ": ks min p = " << min_p
            << ", covariance error = " << last.clt_cov_error
            << ", self-normalized error = " << last.self_cov_error
            << ", mixing min p = " << s.mixing.min_p_value << "\n";
  std::cout << (s.verdict.passed() ? "PASS" : "FAIL") << "\n";
  return s.verdict.passed() ? kPass : kFail;
}

int cmd_diagnose(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const std::size_t workers = resolve_workers(o, &cfg);
  const fs::path dir = out_dir(o, &cfg);
  const DiagnosticsSummary s = run_diagnostics(cfg.mc, workers, /*audit=*/true);
  if (cfg.output.json) write_json(dir / "summary.json", diagnostics_json(s, cfg));
  if (cfg.output.csv) {
    write_file(dir / "decay.csv", [&](std::ostream& f) { write_decay_csv(f, s.decay); });
    write_file(dir / "decay_verdict.csv",
               [&](std::ostream& f) { write_decay_verdict_csv(f, s.decay); });
    write_file(dir / "conditions.csv",
               [&](std::ostream& f) { write_conditions_csv(f, s, cfg.mc.model.order()); });
  }
  for (const auto& r : s.decay.rows)
    if (r.gated && !r.passed)
      std::cout << "decay FAIL: " << r.statistic.family
                << (std::isnan(r.statistic.eps) ? "" : " eps=" + csv_number(r.statistic.eps))
                << "\n";
  const AuditSummary& a = *s.audit;
  for (const auto& v : a.violations)
    std::cout << "audit violation: check " << v.check << " replication " << v.replication
              << " n " << v.n << " k " << v.k << ": " << v.detail << "\n";
  std::cout << "audited rows: " << a.rows_audited << ", violations: " << a.violation_count
            << "\n";
  const bool ok = s.decay.passed && a.passed();
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kPass : kFail;
}

int cmd_rank_demo(const Options& o) {
  const ExperimentConfig cfg = load(o);
  RankCase rc;
  if (!o.rank_case.empty()) {
    nlohmann::json j = {{"case", o.rank_case}};
    if (o.rank_case == "atom_at_zero") {
      j["p0"] = o.p0;
      j["p_u0"] = o.p_u0;
    }
    rc = detail::parse_rank_case(j);
  } else if (cfg.rank_demo) {
    rc = *cfg.rank_demo;
  } else {
    throw ConfigError("rank_demo: give --case or a rank_demo section in the config");
  }
  const std::size_t workers = resolve_workers(o, &cfg);
  const fs::path dir = out_dir(o, &cfg);
  const OmegaReport r = omega_rank_demo(rc, cfg.mc, workers);
  if (cfg.output.json) write_json(dir / "summary.json", omega_json(r, cfg));
  if (cfg.output.csv)
    write_file(dir / "omega.csv", [&](std::ostream& f) { write_omega_csv(f, r); });
  for (const auto& row : r.rows)
    std::cout << "n = " << row.n << ": P(Omega_n) = " << row.frequency
              << (row.checked ? (row.passed ? "  ok" : "  VIOLATED") : "") << "\n";
  std::cout << (r.passed ? "PASS" : "FAIL") << "\n";
  return r.passed ? kPass : kFail;
}

int cmd_simulate(const Options& o) {
  const ExperimentConfig cfg = load(o);
  cfg.mc.validate();
  const fs::path dir = out_dir(o, &cfg);
  RngStream rng = RngStream::substream(cfg.mc.seed, 0);
  const Vec u0 = mdclt::detail::draw_initial(cfg.mc, rng);
  const ArPath path = simulate(cfg.mc.model, cfg.mc.innovation, u0, cfg.mc.max_n(), rng);
  write_file(dir / "path.csv", [&](std::ostream& f) { write_path_csv(f, path); });
  nlohmann::json j = report_meta(cfg.hash, cfg.mc.seed);
  j["command"] = "simulate";
  j["config"] = cfg.raw;
  j["replication"] = 0;
  j["n"] = path.length();
  j["u0"] = Vec(path.state(0).begin(), path.state(0).end());
  j["recursion_error"] = path.recursion_error(cfg.mc.model);
  write_json(dir / "summary.json", j);
  std::cout << "path of length " << path.length() << " written to "
            << (dir / "path.csv").string() << "\n";
  return kPass;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const Unstable& e) {
    std::cerr << "model error: " << e.what() << " (spectral radius " << e.spectral_radius()
              << ")\n";
    return kModel;
  } catch (const Overflow& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kModel;
  } catch (const NonConvergence& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const BucketTooSmall& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const TooFewSamples& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kModel;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Martingale CLT lab for stable AR(d) least squares", "mdclt"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON, schema_version 1)");
    sub->add_option("--out", o.out, "Output directory (overrides output.dir)");
    sub->add_option("--workers", o.workers, "Worker threads (fallback: MDCLT_WORKERS)");
    sub->add_option("--seed", o.seed, "Seed (overrides the config)");
  };

  auto* sigma = app.add_subcommand("compute-sigma", "Sigma(theta), inverse, roots, constants");
  common(sigma);
  sigma->add_option("--theta", o.theta, "AR coefficients, e.g. --theta 0.5,0.2")->delimiter(',');
  sigma->add_option("--d", o.d, "AR order (checked against theta)");
  sigma->add_option("--tol", o.tol, "Tail tolerance of the series");

  auto* verify = app.add_subcommand("verify-clt", "Monte Carlo check of the least-squares CLT");
  common(verify);
  auto* diag = app.add_subcommand("diagnose-conditions", "Condition decay and inequality audit");
  common(diag);
  auto* rank = app.add_subcommand("rank-demo", "Frequency of a positive definite Gram matrix");
  common(rank);
  rank->add_option("--case", o.rank_case,
                   "atom_at_zero | zero_start_continuous | stationary_continuous");
  rank->add_option("--p0", o.p0, "atom_at_zero: P(Z = 0)");
  rank->add_option("--p-u0", o.p_u0, "atom_at_zero: P(U_0 = 0)");
  auto* sim = app.add_subcommand("simulate", "Dump replication 0 as k,Y_k,Z_k");
  common(sim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*sigma) return guarded([&] { return cmd_compute_sigma(o); });
  if (*verify) return guarded([&] { return cmd_verify_clt(o); });
  if (*diag) return guarded([&] { return cmd_diagnose(o); });
  if (*rank) return guarded([&] { return cmd_rank_demo(o); });
  if (*sim) return guarded([&] { return cmd_simulate(o); });
  return kConfig;
}
