#pragma once

// Strict JSON experiment configs (schema_version 1). Every object rejects
// unknown keys; errors name the field path, or the line and column for
// syntax errors.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mdclt/error.hpp"
#include "mdclt/innovations.hpp"
#include "mdclt/stable_test.hpp"

namespace mdclt {

inline constexpr int kSchemaVersion = 1;

struct OutputSpec {
  std::string dir = "out";
  bool json = true;
  bool csv = true;
};

struct ExperimentConfig {
  std::string command;  // optional hint, empty if absent
  McConfig mc;
  std::optional<std::size_t> workers;
  OutputSpec output;
  std::optional<RankCase> rank_demo;
  nlohmann::json raw;
  std::string hash;  // FNV-1a 64 of the canonical (key-sorted) dump, hex
};

inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline const std::vector<std::string>& decay_families() {
  static const std::vector<std::string> f{"clb1",    "clb2",        "raikov_error",
                                          "norming_error", "ta_residual_norm", "tma",
                                          "tma_sq",  "max_norm_sq"};
  return f;
}

namespace detail {

/// Object reader that records which keys were read and rejects the rest.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& get(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + ": required field missing");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const auto& v = get(key);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& key, double fallback) {
    return has(key) ? number(key) : (seen_.insert(key), fallback);
  }

  std::uint64_t unsigned_int(const std::string& key) {
    const auto& v = get(key);
    if (!v.is_number_unsigned())
      throw ConfigError(where(key) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = get(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const auto& v = get(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }

  Vec numbers(const std::string& key) {
    const auto& v = get(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
    Vec out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(where(key) + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) {
    const auto& v = get(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_unsigned())
        throw ConfigError(where(key) + "[" + std::to_string(i) +
                          "]: expected a non-negative integer");
      out.push_back(v[i].get<std::size_t>());
    }
    return out;
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  /// Call after reading every field.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown field");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline InnovationSpec parse_innovation(const nlohmann::json& j) {
  Fields f(j, "innovation");
  const std::string kind = f.string("kind");
  try {
    InnovationSpec out = [&] {
      if (kind == "normal") return InnovationSpec::normal(f.number_or("scale", 1.0));
      if (kind == "rademacher") return InnovationSpec::rademacher(f.number_or("scale", 1.0));
      if (kind == "uniform") return InnovationSpec::uniform(f.number_or("half_width", 1.0));
      if (kind == "three_point")
        return InnovationSpec::three_point(f.number_or("scale", 1.0), f.number("atom"));
      if (kind == "asym_two_point")
        return InnovationSpec::asym_two_point(f.number("a"), f.number("b"));
      throw ConfigError("innovation.kind: unknown kind '" + kind +
                        "' (normal, rademacher, uniform, three_point, asym_two_point)");
    }();
    f.finish();
    return out;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("innovation: ") + e.what());
  }
}

inline InitialSpec parse_initial(const nlohmann::json& j) {
  Fields f(j, "initial");
  const std::string kind = f.string("kind");
  InitialSpec s;
  if (kind == "zero") {
    s.kind = InitialKind::Zero;
  } else if (kind == "fixed") {
    s.kind = InitialKind::Fixed;
    s.value = f.numbers("value");
  } else if (kind == "stationary") {
    s.kind = InitialKind::Stationary;
    s.tol = f.number_or("tol", 1e-12);
  } else {
    throw ConfigError("initial.kind: unknown kind '" + kind + "' (zero, fixed, stationary)");
  }
  f.finish();
  return s;
}

inline Conditioning parse_conditioning(const nlohmann::json& j) {
  Fields f(j, "conditioning");
  const std::string kind = f.string("kind");
  Conditioning c;
  if (kind == "sign_z1") {
    c.kind = ConditioningKind::SignZ1;
  } else if (kind == "first_coord_u0_positive") {
    c.kind = ConditioningKind::FirstCoordU0Positive;
  } else if (kind == "u0_in_ball") {
    c.kind = ConditioningKind::U0InBall;
    c.radius = f.number("radius");
  } else {
    throw ConfigError("conditioning.kind: unknown kind '" + kind +
                      "' (sign_z1, first_coord_u0_positive, u0_in_ball)");
  }
  f.finish();
  return c;
}

inline Thresholds parse_thresholds(const nlohmann::json& j) {
  Fields f(j, "thresholds");
  Thresholds t;
  t.alpha = f.number_or("alpha", t.alpha);
  t.covariance_rel = f.number_or("covariance_rel", t.covariance_rel);
  t.self_normalized_rel = f.number_or("self_normalized_rel", t.self_normalized_rel);
  const auto& families = decay_families();
  auto known = [&](const std::string& name) {
    return std::find(families.begin(), families.end(), name) != families.end();
  };
  if (f.has("decay")) {
    const auto& d = f.get("decay");
    if (!d.is_object()) throw ConfigError("thresholds.decay: expected an object");
    for (const auto& [k, v] : d.items()) {
      if (!known(k)) throw ConfigError("thresholds.decay." + k + ": unknown statistic");
      if (!v.is_number()) throw ConfigError("thresholds.decay." + k + ": expected a number");
      t.decay[k] = v.get<double>();
    }
  }
  if (f.has("decay_gate")) {
    const auto& g = f.get("decay_gate");
    if (!g.is_array()) throw ConfigError("thresholds.decay_gate: expected an array of names");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g[i].is_string() || !known(g[i].get<std::string>()))
        throw ConfigError("thresholds.decay_gate[" + std::to_string(i) +
                          "]: expected a statistic name");
      t.decay_gate.push_back(g[i].get<std::string>());
    }
  }
  f.finish();
  return t;
}

inline RankCase parse_rank_case(const nlohmann::json& j) {
  Fields f(j, "rank_demo");
  RankCase rc;
  const std::string kind = f.string("case");
  if (kind == "atom_at_zero") {
    rc.kind = RankCaseKind::AtomAtZero;
    rc.p0 = f.number("p0");
    rc.p_u0 = f.number_or("p_u0", 1.0);
  } else if (kind == "zero_start_continuous") {
    rc.kind = RankCaseKind::ZeroStartContinuous;
  } else if (kind == "stationary_continuous") {
    rc.kind = RankCaseKind::StationaryContinuous;
  } else {
    throw ConfigError("rank_demo.case: unknown case '" + kind +
                      "' (atom_at_zero, zero_start_continuous, stationary_continuous)");
  }
  f.finish();
  return rc;
}

inline OutputSpec parse_output(const nlohmann::json& j) {
  Fields f(j, "output");
  OutputSpec o;
  if (f.has("dir")) o.dir = f.string("dir");
  if (f.has("formats")) {
    const auto& v = f.get("formats");
    if (!v.is_array()) throw ConfigError("output.formats: expected an array");
    o.json = o.csv = false;
    for (const auto& e : v) {
      const std::string s = e.is_string() ? e.get<std::string>() : "";
      if (s == "json") o.json = true;
      else if (s == "csv") o.csv = true;
      else throw ConfigError("output.formats: entries must be \"json\" or \"csv\"");
    }
  }
  f.finish();
  return o;
}

inline std::string position(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config syntax error at " + detail::position(text, e.byte) + ": " +
                      e.what());
  }
  detail::Fields f(j, "");
  const auto& version = f.get("schema_version");
  if (!version.is_number_integer() || version.get<long long>() != kSchemaVersion)
    throw ConfigError("schema_version: expected 1");

  ExperimentConfig cfg{
      .command = {},
      .mc = McConfig{.model = ArParams({0.0}), .innovation = InnovationSpec::normal(1.0)},
      .workers = std::nullopt,
      .output = {},
      .rank_demo = std::nullopt,
      .raw = j,
      .hash = fnv1a_hex(j.dump())};
  if (f.has("command")) {
    cfg.command = f.string("command");
    static const std::set<std::string> known{"compute-sigma", "verify-clt",
                                             "diagnose-conditions", "rank-demo", "simulate"};
    if (!known.count(cfg.command)) throw ConfigError("command: unknown subcommand");
  }

  {
    detail::Fields m(f.get("model"), "model");
    try {
      cfg.mc.model = ArParams(m.numbers("theta"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.theta: ") + e.what());
    }
    m.finish();
  }
  McConfig& mc = cfg.mc;
  mc.innovation = detail::parse_innovation(f.get("innovation"));
  mc.n_grid = f.counts("n_grid");
  mc.replications = f.unsigned_int("replications");
  mc.seed = f.unsigned_int("seed");
  if (f.has("initial")) mc.initial = detail::parse_initial(f.get("initial"));
  if (f.has("conditioning")) mc.conditioning = detail::parse_conditioning(f.get("conditioning"));
  mc.truncation_a = f.number_or("truncation_a", mc.truncation_a);
  if (f.has("eps_grid")) mc.eps_grid = f.numbers("eps_grid");
  mc.sigma_tol = f.number_or("sigma_tol", mc.sigma_tol);
  mc.condition_reports = f.boolean_or("condition_reports", mc.condition_reports);
  if (f.has("thresholds")) mc.thresholds = detail::parse_thresholds(f.get("thresholds"));
  if (f.has("workers")) {
    const std::uint64_t w = f.unsigned_int("workers");
    if (w < 1) throw ConfigError("workers: must be >= 1");
    cfg.workers = static_cast<std::size_t>(w);
  }
  if (f.has("output")) cfg.output = detail::parse_output(f.get("output"));
  if (f.has("rank_demo")) cfg.rank_demo = detail::parse_rank_case(f.get("rank_demo"));
  f.finish();
  mc.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mdclt
