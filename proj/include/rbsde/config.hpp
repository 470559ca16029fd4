#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbsde/errors.hpp"
#include "rbsde/harness.hpp"
#include "rbsde/io.hpp"
#include "rbsde/scenario.hpp"

// Scenario configuration: built-in registry plus a strict JSON config format.
// Unknown keys are hard errors; command-line overrides beat file values.

namespace rbsde {

namespace cfg {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& path) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw config_error("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

inline Vec get_vec(const json& j, const std::string& path) {
  if (!j.is_array()) throw config_error("'" + path + "' must be an array of numbers");
  Vec v;
  for (const auto& x : j) {
    if (!x.is_number()) throw config_error("'" + path + "' must be an array of numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline std::vector<Vec> get_mat(const json& j, const std::string& path) {
  if (!j.is_array()) throw config_error("'" + path + "' must be an array of rows");
  std::vector<Vec> m;
  for (std::size_t r = 0; r < j.size(); ++r)
    m.push_back(get_vec(j[r], path + "[" + std::to_string(r) + "]"));
  return m;
}

} // namespace cfg

inline ConvexTube tube_from_json(const json& j, double horizon) {
  cfg::check_keys(j, {"type", "center", "radius_poly", "faces"}, "tube");
  const std::string type = j.at("type").get<std::string>();
  if (type == "ball") {
    return ConvexTube::ball(cfg::get_vec(j.at("center"), "tube.center"),
                            Polynomial(cfg::get_vec(j.at("radius_poly"), "tube.radius_poly")),
                            horizon);
  }
  if (type == "halfspace") {
    std::vector<HalfspaceFace> faces;
    for (std::size_t i = 0; i < j.at("faces").size(); ++i) {
      const json& fj = j.at("faces")[i];
      const std::string p = "tube.faces[" + std::to_string(i) + "]";
      cfg::check_keys(fj, {"normal", "offset_poly"}, p);
      faces.push_back({cfg::get_vec(fj.at("normal"), p + ".normal"),
                       Polynomial(cfg::get_vec(fj.at("offset_poly"), p + ".offset_poly"))});
    }
    return ConvexTube::halfspaces(std::move(faces), horizon);
  }
  throw config_error("tube.type must be 'ball' or 'halfspace'");
}

inline BasisSpec basis_from_json(const json& j, const std::string& path) {
  cfg::check_keys(j, {"family", "degree", "bins"}, path);
  BasisSpec b;
  const std::string fam = j.value("family", "polynomial");
  if (fam == "polynomial")
    b = BasisSpec::polynomial(j.value("degree", 2));
  else if (fam == "indicator")
    b = BasisSpec::indicator(j.value("bins", 32));
  else
    throw config_error("'" + path + ".family' must be 'polynomial' or 'indicator'");
  return b;
}

inline Scenario scenario_from_json(const json& j) {
  cfg::check_keys(j,
                  {"name", "dimension", "horizon", "tube", "noise", "forward", "driver",
                   "terminal", "lipschitz", "defaults"},
                  "");
  Scenario sc;
  sc.name = j.value("name", "custom");
  sc.dim = j.at("dimension").get<std::size_t>();
  const double T = j.at("horizon").get<double>();
  sc.tube = tube_from_json(j.at("tube"), T);

  const json& nj = j.at("noise");
  cfg::check_keys(nj, {"brownian_dim", "marks"}, "noise");
  sc.noise.brownian_dim = nj.at("brownian_dim").get<std::size_t>();
  if (nj.contains("marks")) {
    for (std::size_t m = 0; m < nj.at("marks").size(); ++m) {
      const json& mj = nj.at("marks")[m];
      const std::string p = "noise.marks[" + std::to_string(m) + "]";
      cfg::check_keys(mj, {"mark", "intensity"}, p);
      sc.noise.marks.push_back(cfg::get_vec(mj.at("mark"), p + ".mark"));
      sc.noise.intensities.push_back(mj.at("intensity").get<double>());
    }
  }
  sc.noise.check();

  const json& fj = j.at("forward");
  cfg::check_keys(fj, {"dim", "x0", "drift_const", "drift_linear", "diffusion", "jump_coeffs"},
                  "forward");
  sc.forward.dim = fj.at("dim").get<std::size_t>();
  sc.forward.x0 = cfg::get_vec(fj.at("x0"), "forward.x0");
  if (fj.contains("drift_const"))
    sc.forward.drift_const = cfg::get_vec(fj.at("drift_const"), "forward.drift_const");
  if (fj.contains("drift_linear"))
    sc.forward.drift_linear = cfg::get_mat(fj.at("drift_linear"), "forward.drift_linear");
  if (fj.contains("diffusion"))
    sc.forward.diffusion = cfg::get_mat(fj.at("diffusion"), "forward.diffusion");
  if (fj.contains("jump_coeffs"))
    sc.forward.jump_coefs = cfg::get_mat(fj.at("jump_coeffs"), "forward.jump_coeffs");

  const json& dj = j.at("driver");
  cfg::check_keys(dj, {"family", "kappa", "y_matrix", "x_matrix", "time_poly"}, "driver");
  const std::string dfam = dj.value("family", "zero");
  if (dfam != "zero" && dfam != "constant" && dfam != "affine")
    throw config_error("driver.family must be 'zero', 'constant' or 'affine'");
  if (dj.contains("kappa")) sc.driver.kappa = cfg::get_vec(dj.at("kappa"), "driver.kappa");
  if (dj.contains("y_matrix"))
    sc.driver.y_matrix = cfg::get_mat(dj.at("y_matrix"), "driver.y_matrix");
  if (dj.contains("x_matrix"))
    sc.driver.x_matrix = cfg::get_mat(dj.at("x_matrix"), "driver.x_matrix");
  if (dj.contains("time_poly"))
    sc.driver.time_poly = Polynomial(cfg::get_vec(dj.at("time_poly"), "driver.time_poly"));

  const json& tj = j.at("terminal");
  cfg::check_keys(tj, {"family", "offset", "matrix", "center", "radius", "lo", "hi"},
                  "terminal");
  const std::string tfam = tj.at("family").get<std::string>();
  if (tfam == "constant")
    sc.terminal.family = TerminalSpec::Family::constant;
  else if (tfam == "affine")
    sc.terminal.family = TerminalSpec::Family::affine;
  else if (tfam == "ball_clamp")
    sc.terminal.family = TerminalSpec::Family::ball_clamp;
  else if (tfam == "box_clamp")
    sc.terminal.family = TerminalSpec::Family::box_clamp;
  else
    throw config_error("terminal.family must be constant|affine|ball_clamp|box_clamp");
  if (tj.contains("offset")) sc.terminal.offset = cfg::get_vec(tj.at("offset"), "terminal.offset");
  if (tj.contains("matrix"))
    sc.terminal.matrix = cfg::get_mat(tj.at("matrix"), "terminal.matrix");
  if (tj.contains("center"))
    sc.terminal.clamp_center = cfg::get_vec(tj.at("center"), "terminal.center");
  if (tj.contains("radius")) sc.terminal.clamp_radius = tj.at("radius").get<double>();
  if (tj.contains("lo")) sc.terminal.clamp_lo = cfg::get_vec(tj.at("lo"), "terminal.lo");
  if (tj.contains("hi")) sc.terminal.clamp_hi = cfg::get_vec(tj.at("hi"), "terminal.hi");

  sc.lipschitz = j.value("lipschitz", sc.driver.lipschitz_bound(T));

  if (j.contains("defaults")) {
    const json& rj = j.at("defaults");
    cfg::check_keys(rj,
                    {"steps", "paths", "seed", "n_penalty", "replications", "n_list", "basis"},
                    "defaults");
    sc.defaults.steps = rj.value("steps", sc.defaults.steps);
    sc.defaults.paths = rj.value("paths", sc.defaults.paths);
    sc.defaults.seed = rj.value("seed", sc.defaults.seed);
    sc.defaults.n_penalty = rj.value("n_penalty", sc.defaults.n_penalty);
    sc.defaults.replications = rj.value("replications", sc.defaults.replications);
    if (rj.contains("n_list")) sc.defaults.n_list = rj.at("n_list").get<std::vector<int>>();
    if (rj.contains("basis")) sc.defaults.basis = basis_from_json(rj.at("basis"), "defaults.basis");
  }
  return sc;
}

// ---- built-in scenario registry --------------------------------------------

namespace detail {

inline std::vector<Vec> identity_rows(std::size_t d, double s) {
  std::vector<Vec> m(d, Vec(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) m[i][i] = s;
  return m;
}

inline ConvexTube interval_tube(double lo, double hi, double horizon) {
  std::vector<HalfspaceFace> faces;
  faces.push_back({Vec{1.0}, Polynomial::constant(hi)});
  faces.push_back({Vec{-1.0}, Polynomial::constant(-lo)});
  return ConvexTube::halfspaces(std::move(faces), horizon);
}

inline ConvexTube box_tube(const Vec& lo, const Vec& hi, double horizon) {
  std::vector<HalfspaceFace> faces;
  const std::size_t d = lo.size();
  for (std::size_t c = 0; c < d; ++c) {
    Vec e(d, 0.0);
    e[c] = 1.0;
    faces.push_back({e, Polynomial::constant(hi[c])});
    e[c] = -1.0;
    faces.push_back({e, Polynomial::constant(-lo[c])});
  }
  return ConvexTube::halfspaces(std::move(faces), horizon);
}

} // namespace detail

inline std::vector<std::string> scenario_names() {
  return {"constant",      "martingale",      "binding-1d",
          "shrinking-ball-jumps", "linear-driver", "constant-driver",
          "expanding-ball"};
}

inline Scenario make_scenario(const std::string& name) {
  Scenario sc;
  sc.name = name;
  if (name == "constant") {
    // f = 0, g = c inside every slice: Y must stay exactly c for every n.
    sc.dim = 2;
    sc.tube = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({2.0, -1.0}), 1.0);
    sc.noise.brownian_dim = 1;
    sc.forward.dim = 1;
    sc.forward.x0 = {0.0};
    sc.forward.diffusion = {{1.0}};
    sc.terminal.family = TerminalSpec::Family::constant;
    sc.terminal.offset = {0.3, -0.2};
    sc.defaults.steps = 256;
    sc.defaults.paths = 10000;
    sc.defaults.seed = 1;
    return sc;
  }
  if (name == "martingale") {
    // f = 0, g = clamp(0.25 X_T) well inside the box: E[g|F_t] stays in the
    // domain and so do the regressed continuation values (the fitted
    // polynomial must not escape on tail paths), so the penalty never binds.
    sc.dim = 2;
    sc.tube = detail::box_tube(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, 1.0);
    sc.noise.brownian_dim = 2;
    sc.forward.dim = 2;
    sc.forward.x0 = {0.0, 0.0};
    sc.forward.diffusion = detail::identity_rows(2, 0.5);
    sc.terminal.family = TerminalSpec::Family::box_clamp;
    sc.terminal.matrix = detail::identity_rows(2, 0.25);
    sc.terminal.clamp_lo = {-0.4, -0.4};
    sc.terminal.clamp_hi = {0.4, 0.4};
    sc.defaults.steps = 256;
    sc.defaults.paths = 10000;
    return sc;
  }
  if (name == "binding-1d") {
    // Outward drift kappa*X with X Brownian: the push varies across paths,
    // keeping the martingale part alive at the boundary.
    sc.dim = 1;
    sc.tube = detail::interval_tube(-1.0, 1.0, 1.0);
    sc.noise.brownian_dim = 1;
    sc.forward.dim = 1;
    sc.forward.x0 = {0.0};
    sc.forward.diffusion = {{1.0}};
    sc.driver.x_matrix = {{2.5}};
    sc.terminal.family = TerminalSpec::Family::box_clamp;
    sc.terminal.matrix = {{0.5}};
    sc.terminal.clamp_lo = {-0.8};
    sc.terminal.clamp_hi = {0.8};
    sc.defaults.steps = 1024;
    sc.defaults.paths = 20000;
    sc.defaults.replications = 5;
    sc.defaults.n_penalty = 512;
    return sc;
  }
  if (name == "shrinking-ball-jumps") {
    sc.dim = 2;
    sc.tube = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({2.0, -0.5}), 1.0);
    sc.noise.brownian_dim = 2;
    sc.noise.marks = {Vec{0.3, 0.0}, Vec{0.0, -0.2}};
    sc.noise.intensities = {3.0, 2.0};
    sc.forward.dim = 2;
    sc.forward.x0 = {0.0, 0.0};
    sc.forward.diffusion = detail::identity_rows(2, 0.5);
    sc.forward.jump_coefs = {Vec{0.3, 0.0}, Vec{0.0, -0.2}};
    sc.driver.y_matrix = detail::identity_rows(2, 1.5);
    sc.lipschitz = sc.driver.lipschitz_bound();
    sc.terminal.family = TerminalSpec::Family::ball_clamp;
    sc.terminal.matrix = detail::identity_rows(2, 0.8);
    sc.terminal.clamp_center = {0.0, 0.0};
    sc.terminal.clamp_radius = 1.2;
    sc.defaults.steps = 256;
    sc.defaults.paths = 5000;
    sc.defaults.replications = 5;
    return sc;
  }
  if (name == "linear-driver") {
    // f = -rho y, g = c: Y_0 = c e^{-rho T} in closed form.
    sc.dim = 1;
    sc.tube = ConvexTube::ball(Vec{0.0}, Polynomial::constant(5.0), 1.0);
    sc.noise.brownian_dim = 1;
    sc.forward.dim = 1;
    sc.forward.x0 = {0.0};
    sc.forward.diffusion = {{1.0}};
    sc.driver.y_matrix = {{-1.0}};
    sc.lipschitz = 1.0;
    sc.terminal.family = TerminalSpec::Family::constant;
    sc.terminal.offset = {1.0};
    sc.defaults.steps = 512;
    sc.defaults.paths = 20000;
    return sc;
  }
  if (name == "constant-driver") {
    // f = kappa, g = c: Y_0 = c + kappa T by direct integration.
    sc.dim = 1;
    sc.tube = ConvexTube::ball(Vec{0.0}, Polynomial::constant(5.0), 1.0);
    sc.noise.brownian_dim = 1;
    sc.forward.dim = 1;
    sc.forward.x0 = {0.0};
    sc.forward.diffusion = {{1.0}};
    sc.driver.kappa = {0.5};
    sc.terminal.family = TerminalSpec::Family::constant;
    sc.terminal.offset = {1.0};
    sc.defaults.steps = 256;
    sc.defaults.paths = 5000;
    return sc;
  }
  if (name == "expanding-ball") {
    // deliberately invalid: the slices grow, non-expansion fails
    sc.dim = 2;
    sc.tube = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({1.0, 1.0}), 1.0);
    sc.noise.brownian_dim = 1;
    sc.forward.dim = 1;
    sc.forward.x0 = {0.0};
    sc.forward.diffusion = {{1.0}};
    sc.terminal.family = TerminalSpec::Family::constant;
    sc.terminal.offset = {0.0, 0.0};
    return sc;
  }
  std::string known;
  for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
  throw config_error("unknown scenario '" + name + "' (known: " + known + ")");
}

// ---- run configuration ------------------------------------------------------

struct RunConfig {
  std::string command;
  std::string scenario;    // registry name
  std::string config_file; // JSON file path
  std::optional<std::size_t> steps, paths, replications;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_penalty;
  std::optional<int> basis_degree;
  std::vector<int> n_list; // empty = scenario default
  std::string out_dir = "out";
  int threads = 0;
};

struct ResolvedRun {
  Scenario scenario;
  std::size_t steps = 0, paths = 0, replications = 0;
  std::uint64_t seed = 0;
  int n_penalty = 0;
  std::vector<int> n_list;
  BasisSpec basis;
  std::string out_dir;
  int threads = 0;
  json config_echo; // canonical configuration for the manifest hash
};

inline ResolvedRun resolve_run(const RunConfig& rc) {
  if (rc.scenario.empty() == rc.config_file.empty())
    throw config_error("exactly one of --scenario and --config is required");
  ResolvedRun r;
  r.out_dir = rc.out_dir;
  r.threads = rc.threads;
  json echo;
  if (!rc.scenario.empty()) {
    r.scenario = make_scenario(rc.scenario);
    echo["scenario"] = rc.scenario;
  } else {
    const json file = json::parse(read_text_file(rc.config_file), nullptr, true, true);
    r.scenario = scenario_from_json(file);
    echo["scenario_config"] = file;
  }
  const RunDefaults& d = r.scenario.defaults;
  r.steps = rc.steps.value_or(d.steps);
  r.paths = rc.paths.value_or(d.paths);
  r.replications = rc.replications.value_or(d.replications);
  r.seed = rc.seed.value_or(d.seed);
  r.n_penalty = rc.n_penalty.value_or(d.n_penalty);
  r.n_list = rc.n_list.empty() ? d.n_list : rc.n_list;
  r.basis = d.basis;
  if (rc.basis_degree) r.basis = BasisSpec::polynomial(*rc.basis_degree);
  if (r.steps < 1 || r.paths < 1 || r.replications < 1 || r.n_penalty < 1)
    throw config_error("overrides must be positive");
  echo["steps"] = r.steps;
  echo["paths"] = r.paths;
  echo["replications"] = r.replications;
  echo["seed"] = r.seed;
  echo["n_penalty"] = r.n_penalty;
  echo["n_list"] = r.n_list;
  r.config_echo = echo;
  return r;
}

} // namespace rbsde
