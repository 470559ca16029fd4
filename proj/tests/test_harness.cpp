#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "rbsde/config.hpp"
#include "rbsde/harness.hpp"
#include "rbsde/io.hpp"
#include "rbsde/rng.hpp"

using namespace rbsde;

TEST_CASE("rate fit on exact power laws") {
  {
    std::vector<std::pair<double, double>> pts;
    for (int n : {4, 8, 16}) pts.emplace_back(n, 1.0 / n);
    const RateFit f = fit_rate(pts);
    REQUIRE(f.defined);
    CHECK(f.slope == Catch::Approx(-1.0).margin(1e-12));
    CHECK(f.half_width == Catch::Approx(0.0).margin(1e-10));
  }
  {
    std::vector<std::pair<double, double>> pts;
    for (int n : {4, 8, 16, 32}) pts.emplace_back(n, 3.7 / (n * n));
    const RateFit f = fit_rate(pts);
    REQUIRE(f.defined);
    CHECK(f.slope == Catch::Approx(-2.0).margin(1e-12));
  }
}

TEST_CASE("rate fit with 1% multiplicative noise") {
  PathRng rng(61, 0);
  std::vector<std::pair<double, double>> pts;
  for (int n : {4, 8, 16, 32, 64, 128, 256, 512})
    pts.emplace_back(n, (1.0 / n) * (1.0 + rng.uniform(-0.01, 0.01)));
  const RateFit f = fit_rate(pts);
  REQUIRE(f.defined);
  CHECK(f.slope > -1.05);
  CHECK(f.slope < -0.95);
}

TEST_CASE("rate fit needs three usable points") {
  std::vector<std::pair<double, double>> pts{{4.0, 0.1}, {8.0, 0.05}};
  CHECK_FALSE(fit_rate(pts).defined);
  pts.emplace_back(16.0, 0.0); // non-positive values cannot enter a log fit
  CHECK_FALSE(fit_rate(pts).defined);
}

TEST_CASE("sweep plan validation") {
  SweepPlan plan;
  plan.n_list = {4, 4};
  CHECK_THROWS_AS(plan.check(), config_error);
  plan.n_list = {4, 8};
  plan.replications = 2;
  CHECK_THROWS_AS(plan.check(), config_error);
  plan.replications = 3;
  plan.check();
}

TEST_CASE("sweep on a non-binding scenario: metrics zero, slopes null") {
  const Scenario sc = make_scenario("martingale");
  SweepPlan plan;
  plan.n_list = {4, 8, 16};
  plan.steps = 32;
  plan.paths = 2000;
  plan.replications = 3;
  plan.seed_base = 62;
  const RateReport rep = run_sweep(sc, plan);
  REQUIRE(rep.levels.size() == 3);
  for (const auto& l : rep.levels) {
    CHECK(l.tv_lambda.value == 0.0);
    CHECK(l.sup_dist_sq.value == 0.0);
  }
  CHECK_FALSE(rep.slope_sup.defined);
  CHECK_FALSE(rep.slope_int.defined);
  // identical paired paths: Cauchy gaps vanish too
  for (const auto& c : rep.cauchy) CHECK(c.cauchy_sq.value == 0.0);
  CHECK_FALSE(rep.partial);
}

TEST_CASE("sweep on the binding interval produces decaying metrics and plots") {
  const Scenario sc = make_scenario("binding-1d");
  SweepPlan plan;
  plan.n_list = {8, 16, 32, 64, 128};
  plan.steps = 256;
  plan.paths = 4000;
  plan.replications = 3;
  plan.seed_base = 63;
  const RateReport rep = run_sweep(sc, plan);
  REQUIRE(rep.levels.size() == 5);
  CHECK(rep.levels.front().sup_dist_sq.value > rep.levels.back().sup_dist_sq.value);
  REQUIRE(rep.slope_sup.defined);
  CHECK(rep.slope_sup.slope < -0.4);
  REQUIRE(rep.slope_cauchy.defined);
  REQUIRE(rep.cauchy.size() == 4);
  CHECK(rep.cauchy.front().cauchy_sq.value > 0.0);

  const auto dir = std::filesystem::temp_directory_path() / "rbsde_sweep_test";
  std::filesystem::remove_all(dir);
  emit_report(rep, dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  for (const char* f : {"sup_dist_sq", "int_dist_sq", "tv_lambda", "sup_y_sq", "cauchy_sq"})
    CHECK(std::filesystem::exists(dir / "plotdata" / (std::string(f) + ".dat")));

  // round-trip: parse back to an equal structure
  const RateReport back = load_report(dir / "report.json");
  CHECK(report_to_json(back) == report_to_json(rep));

  // csv row count: |n_list| x 4 metrics + header
  const std::string csv = read_text_file(dir / "metrics.csv");
  const std::size_t rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(rows == plan.n_list.size() * 4 + 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty sweep emits a valid report") {
  RateReport rep;
  rep.scenario_id = "none";
  const auto dir = std::filesystem::temp_directory_path() / "rbsde_empty_report";
  std::filesystem::remove_all(dir);
  emit_report(rep, dir);
  const RateReport back = load_report(dir / "report.json");
  CHECK(back.levels.empty());
  CHECK(back.cauchy.empty());
  CHECK_FALSE(back.slope_sup.defined);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical plans give byte-identical artifacts") {
  const Scenario sc = make_scenario("binding-1d");
  SweepPlan plan;
  plan.n_list = {8, 16, 32};
  plan.steps = 64;
  plan.paths = 2000;
  plan.replications = 3;
  plan.seed_base = 64;

  const auto dir1 = std::filesystem::temp_directory_path() / "rbsde_det_1";
  const auto dir2 = std::filesystem::temp_directory_path() / "rbsde_det_2";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  plan.threads = 1;
  emit_report(run_sweep(sc, plan), dir1);
  plan.threads = 4; // same values regardless of worker count
  emit_report(run_sweep(sc, plan), dir2);
  CHECK(read_text_file(dir1 / "report.json") == read_text_file(dir2 / "report.json"));
  CHECK(read_text_file(dir1 / "metrics.csv") == read_text_file(dir2 / "metrics.csv"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("uniform-in-n boundedness on the binding scenario") {
  const Scenario sc = make_scenario("binding-1d");
  SweepPlan plan;
  plan.n_list = {4, 16, 64, 256};
  plan.steps = 256;
  plan.paths = 4000;
  plan.replications = 3;
  plan.seed_base = 65;
  const RateReport rep = run_sweep(sc, plan);
  double tv_min = 1e300, tv_max = 0.0, y_min = 1e300, y_max = 0.0;
  for (const auto& l : rep.levels) {
    tv_min = std::min(tv_min, l.tv_lambda.value);
    tv_max = std::max(tv_max, l.tv_lambda.value);
    y_min = std::min(y_min, l.sup_y_sq.value);
    y_max = std::max(y_max, l.sup_y_sq.value);
  }
  CHECK((tv_max - tv_min) / tv_max < 0.25);
  CHECK((y_max - y_min) / y_max < 0.25);
}
