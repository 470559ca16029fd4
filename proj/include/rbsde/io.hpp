#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbsde/errors.hpp"
#include "rbsde/harness.hpp"
#include "rbsde/rng.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/version.hpp"

// Machine-readable outputs: report.json (schema-versioned), metrics.csv,
// gnuplot-ready plotdata series, per-quantity solution summaries, manifests.
// All numeric formatting is value-deterministic so identical runs produce
// byte-identical files.

namespace rbsde {

using nlohmann::json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json to_json(const MetricEstimate& e) {
  return json{{"estimate", e.value}, {"stderr", e.stderr_}};
}

inline MetricEstimate metric_from_json(const json& j) {
  MetricEstimate e;
  e.value = j.at("estimate").get<double>();
  e.stderr_ = j.at("stderr").get<double>();
  return e;
}

inline json to_json(const RateFit& f) {
  if (!f.defined) return nullptr;
  return json{{"slope", f.slope},
              {"intercept", f.intercept},
              {"half_width", f.half_width},
              {"points", f.points_used}};
}

inline RateFit fit_from_json(const json& j) {
  RateFit f;
  if (j.is_null()) return f;
  f.defined = true;
  f.slope = j.at("slope").get<double>();
  f.intercept = j.at("intercept").get<double>();
  f.half_width = j.at("half_width").get<double>();
  f.points_used = j.at("points").get<std::size_t>();
  return f;
}

inline json report_to_json(const RateReport& r) {
  json levels = json::array();
  for (const auto& l : r.levels)
    levels.push_back(json{{"n", l.n},
                          {"sup_dist_sq", to_json(l.sup_dist_sq)},
                          {"int_dist_sq", to_json(l.int_dist_sq)},
                          {"tv_lambda", to_json(l.tv_lambda)},
                          {"sup_y_sq", to_json(l.sup_y_sq)}});
  json cauchy = json::array();
  for (const auto& c : r.cauchy)
    cauchy.push_back(
        json{{"n", c.n_lo}, {"n2", c.n_hi}, {"cauchy_sq", to_json(c.cauchy_sq)}});
  return json{{"schema_version", report_schema_version},
              {"scenario", r.scenario_id},
              {"plan",
               json{{"n_list", r.n_list},
                    {"steps", r.steps},
                    {"paths", r.paths},
                    {"replications", r.replications},
                    {"seed", r.seed_base}}},
              {"levels", levels},
              {"cauchy", cauchy},
              {"slopes",
               json{{"sup", to_json(r.slope_sup)},
                    {"int", to_json(r.slope_int)},
                    {"cauchy", to_json(r.slope_cauchy)}}},
              {"partial", r.partial},
              {"abort_reason", r.abort_reason}};
}

inline RateReport report_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != report_schema_version)
    throw input_error("report.json: unsupported schema version");
  RateReport r;
  r.scenario_id = j.at("scenario").get<std::string>();
  const json& plan = j.at("plan");
  r.n_list = plan.at("n_list").get<std::vector<int>>();
  r.steps = plan.at("steps").get<std::size_t>();
  r.paths = plan.at("paths").get<std::size_t>();
  r.replications = plan.at("replications").get<std::size_t>();
  r.seed_base = plan.at("seed").get<std::uint64_t>();
  for (const auto& l : j.at("levels")) {
    LevelMetrics lm;
    lm.n = l.at("n").get<int>();
    lm.sup_dist_sq = metric_from_json(l.at("sup_dist_sq"));
    lm.int_dist_sq = metric_from_json(l.at("int_dist_sq"));
    lm.tv_lambda = metric_from_json(l.at("tv_lambda"));
    lm.sup_y_sq = metric_from_json(l.at("sup_y_sq"));
    r.levels.push_back(lm);
  }
  for (const auto& c : j.at("cauchy")) {
    CauchyPoint cp;
    cp.n_lo = c.at("n").get<int>();
    cp.n_hi = c.at("n2").get<int>();
    cp.cauchy_sq = metric_from_json(c.at("cauchy_sq"));
    r.cauchy.push_back(cp);
  }
  r.slope_sup = fit_from_json(j.at("slopes").at("sup"));
  r.slope_int = fit_from_json(j.at("slopes").at("int"));
  r.slope_cauchy = fit_from_json(j.at("slopes").at("cauchy"));
  r.partial = j.at("partial").get<bool>();
  r.abort_reason = j.at("abort_reason").get<std::string>();
  return r;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open for writing: " + path.string());
  f << body;
  if (!f) throw input_error("short write: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open: " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// report.json + metrics.csv + plotdata/*.dat
inline void emit_report(const RateReport& r, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "plotdata", ec);
  if (ec) throw input_error("cannot create output directory: " + out_dir.string());

  write_text_file(out_dir / "report.json", report_to_json(r).dump(2) + "\n");

  std::string csv = "n,metric,estimate,stderr\n";
  auto row = [&csv](int n, const char* name, const MetricEstimate& e) {
    csv += std::to_string(n);
    csv += ',';
    csv += name;
    csv += ',';
    csv += format_double(e.value);
    csv += ',';
    csv += format_double(e.stderr_);
    csv += '\n';
  };
  for (const auto& l : r.levels) {
    row(l.n, "sup_dist_sq", l.sup_dist_sq);
    row(l.n, "int_dist_sq", l.int_dist_sq);
    row(l.n, "tv_lambda", l.tv_lambda);
    row(l.n, "sup_y_sq", l.sup_y_sq);
  }
  write_text_file(out_dir / "metrics.csv", csv);

  auto series = [&](const char* name, auto&& get, const auto& items) {
    std::string body;
    for (const auto& it : items) {
      body += std::to_string(get(it).first);
      body += ' ';
      body += format_double(get(it).second);
      body += '\n';
    }
    write_text_file(out_dir / "plotdata" / (std::string(name) + ".dat"), body);
  };
  series("sup_dist_sq",
         [](const LevelMetrics& l) { return std::pair(l.n, l.sup_dist_sq.value); },
         r.levels);
  series("int_dist_sq",
         [](const LevelMetrics& l) { return std::pair(l.n, l.int_dist_sq.value); },
         r.levels);
  series("tv_lambda",
         [](const LevelMetrics& l) { return std::pair(l.n, l.tv_lambda.value); }, r.levels);
  series("sup_y_sq",
         [](const LevelMetrics& l) { return std::pair(l.n, l.sup_y_sq.value); }, r.levels);
  series("cauchy_sq",
         [](const CauchyPoint& c) { return std::pair(c.n_lo, c.cauchy_sq.value); },
         r.cauchy);
}

inline RateReport load_report(const std::filesystem::path& path) {
  return report_from_json(json::parse(read_text_file(path)));
}

// Per-quantity CSV summaries over paths: one row per (step, component).
inline void dump_solution_csv(const BackwardSolution& sol, const TimeGrid& grid,
                              const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw input_error("cannot create output directory: " + out_dir.string());
  const std::size_t M = sol.paths;

  auto summarize = [&](const std::string& fname, std::size_t comps, std::size_t nsteps,
                       auto&& value) {
    std::string csv = "step,t,comp,mean,sd,q05,q25,q50,q75,q95\n";
    std::vector<double> buf(M);
    for (std::size_t k = 0; k < nsteps; ++k) {
      for (std::size_t c = 0; c < comps; ++c) {
        for (std::size_t i = 0; i < M; ++i) buf[i] = value(k, i, c);
        Kahan s;
        for (double v : buf) s.add(v);
        const double mean = s.value() / static_cast<double>(M);
        Kahan v2;
        for (double v : buf) v2.add((v - mean) * (v - mean));
        const double sd =
            M > 1 ? std::sqrt(v2.value() / static_cast<double>(M - 1)) : 0.0;
        std::sort(buf.begin(), buf.end());
        auto q = [&](double p) {
          const std::size_t idx = std::min(
              M - 1, static_cast<std::size_t>(p * static_cast<double>(M - 1) + 0.5));
          return buf[idx];
        };
        csv += std::to_string(k) + ',' + format_double(grid.t(k)) + ',' +
               std::to_string(c) + ',' + format_double(mean) + ',' + format_double(sd) +
               ',' + format_double(q(0.05)) + ',' + format_double(q(0.25)) + ',' +
               format_double(q(0.50)) + ',' + format_double(q(0.75)) + ',' +
               format_double(q(0.95)) + '\n';
      }
    }
    write_text_file(out_dir / fname, csv);
  };

  summarize("y.csv", sol.dim, sol.steps + 1,
            [&](std::size_t k, std::size_t i, std::size_t c) { return sol.y_at(k, i)[c]; });
  if (sol.has_z)
    summarize("z.csv", sol.dim * sol.n_w, sol.steps,
              [&](std::size_t k, std::size_t i, std::size_t c) { return sol.z_at(k, i)[c]; });
  if (sol.has_u)
    summarize("u.csv", sol.dim * sol.n_j, sol.steps,
              [&](std::size_t k, std::size_t i, std::size_t c) { return sol.u_at(k, i)[c]; });
  if (sol.has_dlambda) {
    // running Lambda_k per path
    std::vector<double> lam(M * sol.dim, 0.0);
    std::string csv = "step,t,comp,mean,sd,q05,q25,q50,q75,q95\n";
    std::vector<double> buf(M);
    for (std::size_t k = 0; k <= sol.steps; ++k) {
      for (std::size_t c = 0; c < sol.dim; ++c) {
        for (std::size_t i = 0; i < M; ++i) buf[i] = lam[i * sol.dim + c];
        Kahan s;
        for (double v : buf) s.add(v);
        const double mean = s.value() / static_cast<double>(M);
        Kahan v2;
        for (double v : buf) v2.add((v - mean) * (v - mean));
        const double sd =
            M > 1 ? std::sqrt(v2.value() / static_cast<double>(M - 1)) : 0.0;
        std::sort(buf.begin(), buf.end());
        auto q = [&](double p) {
          const std::size_t idx = std::min(
              M - 1, static_cast<std::size_t>(p * static_cast<double>(M - 1) + 0.5));
          return buf[idx];
        };
        csv += std::to_string(k) + ',' + format_double(grid.t(k)) + ',' +
               std::to_string(c) + ',' + format_double(mean) + ',' + format_double(sd) +
               ',' + format_double(q(0.05)) + ',' + format_double(q(0.25)) + ',' +
               format_double(q(0.50)) + ',' + format_double(q(0.75)) + ',' +
               format_double(q(0.95)) + '\n';
      }
      if (k < sol.steps)
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t c = 0; c < sol.dim; ++c)
            lam[i * sol.dim + c] += sol.dlambda_at(k, i)[c];
    }
    write_text_file(out_dir / "lambda.csv", csv);
  }
}

inline constexpr std::uint32_t kSolutionMagic = 0x52425331; // "RBS1"

// Full binary dump of the stored arrays.
inline void dump_solution_binary(const BackwardSolution& sol,
                                 const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open for writing: " + path.string());
  auto put = [&f](const void* p, std::size_t len) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
  };
  const std::uint64_t dims[6] = {sol.paths, sol.steps, sol.dim, sol.n_w, sol.n_j,
                                 static_cast<std::uint64_t>(sol.penalty_n)};
  const std::uint8_t flags[3] = {sol.has_z, sol.has_u, sol.has_dlambda};
  put(&kSolutionMagic, 4);
  put(dims, sizeof(dims));
  put(flags, sizeof(flags));
  put(sol.y.data(), sol.y.size() * 8);
  if (sol.has_z) put(sol.z.data(), sol.z.size() * 8);
  if (sol.has_u) put(sol.u.data(), sol.u.size() * 8);
  if (sol.has_dlambda) put(sol.dlambda.data(), sol.dlambda.size() * 8);
  if (!f) throw input_error("short write: " + path.string());
}

inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const json& config, std::uint64_t seed) {
  const std::string canon = config.dump();
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon.data(), canon.size())));
  const json manifest{{"version", version},
                      {"command", command},
                      {"config_hash", hash},
                      {"seed", seed}};
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw input_error("cannot create output directory: " + out_dir.string());
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace rbsde
