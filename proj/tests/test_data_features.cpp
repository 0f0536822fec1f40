#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "hohsmm/data_features.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace hohsmm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hohsmm-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static inline int counter = 0;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("synthetic corpora obey the generator's invariants") {
  SyntheticConfig config;
  config.num_states = 3;
  config.order = 2;
  config.num_sequences = 5;
  config.t_min = 300;
  config.t_max = 400;
  config.tensor_seed = 7;
  Rng rng = make_rng(60);
  auto [trajs, truth] = generate_synthetic(config, rng);

  REQUIRE(trajs.size() == 5);
  REQUIRE(truth.states.size() == 5);
  for (std::size_t p = 0; p < trajs.size(); ++p) {
    int T = static_cast<int>(trajs[p].values.size());
    CHECK(T >= config.t_min);
    CHECK(T <= config.t_max);
    CHECK(truth.total_lengths[p] == T);
    CHECK(trajs[p].unit_id == "sim-" + std::to_string(p + 1));
    // Durations add up to the length and states never self-transition.
    long sum = std::accumulate(truth.durations_per_seq[p].begin(),
                               truth.durations_per_seq[p].end(), 0L);
    CHECK(sum == T);
    CHECK(truth.num_segments[p] ==
          static_cast<int>(truth.states[p].size()));
    for (std::size_t i = 1; i < truth.states[p].size(); ++i)
      CHECK(truth.states[p][i] != truth.states[p][i - 1]);
    for (int d : truth.durations_per_seq[p]) CHECK(d >= 1);
    // The first segments are distinct, as the history initialization demands.
    std::set<int> head(truth.states[p].begin(),
                       truth.states[p].begin() + config.order);
    CHECK(static_cast<int>(head.size()) == config.order);
  }

  // The truth tensor is full-order with renormalized zero-diagonal rows.
  CHECK(truth.tensor.k == std::vector<int>{3, 3});
  for (std::size_t row = 0; row < 9; ++row) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += truth.tensor.lambda_bar[row * 3 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(truth.tensor.lambda_bar[row * 3 + truth.tensor.excluded_state(row)]
          == 0.0);
  }
}

TEST_CASE("a fixed tensor seed decouples the law from the trajectory draws") {
  SyntheticConfig config;
  config.num_sequences = 2;
  config.t_min = 100;
  config.t_max = 120;
  config.tensor_seed = 99;
  Rng a = make_rng(61);
  Rng b = make_rng(62);  // different trajectory stream
  auto ta = generate_synthetic(config, a);
  auto tb = generate_synthetic(config, b);
  CHECK(ta.second.tensor.lambda_bar == tb.second.tensor.lambda_bar);
  CHECK(ta.first[0].values != tb.first[0].values);
}

TEST_CASE("synthetic configuration is validated") {
  SyntheticConfig config;
  config.mu = {0.0};  // wrong arity
  CHECK_THROWS_AS(config.validate(), InputError);
  config = {};
  config.t_min = 50;
  config.t_max = 20;
  CHECK_THROWS_AS(config.validate(), InputError);
  config = {};
  config.order = 0;
  CHECK_THROWS_AS(config.validate(), InputError);
  config = {};
  config.xi = {15.0, 10.0, -1.0};
  CHECK_THROWS_AS(config.validate(), InputError);
}

TEST_CASE("sensor tables survive a write/read round trip") {
  TempDir dir;
  Rng rng = make_rng(63);
  auto fx = fixtures::degradation_fixture(2, 1, 64);
  auto path = dir.file("train.csv");
  write_sensor_csv(fx.train, path);
  auto loaded = load_sensor_csv(path);
  REQUIRE(loaded.units.size() == fx.train.units.size());
  for (std::size_t u = 0; u < loaded.units.size(); ++u) {
    CHECK(loaded.units[u].unit_id == fx.train.units[u].unit_id);
    CHECK(loaded.units[u].cycles == fx.train.units[u].cycles);
    REQUIRE(loaded.units[u].rows.size() == fx.train.units[u].rows.size());
    for (std::size_t r = 0; r < loaded.units[u].rows.size(); ++r)
      for (int c = 0; c < SensorTable::kNumColumns; ++c)
        CHECK(loaded.units[u].rows[r][c] ==
              doctest::Approx(fx.train.units[u].rows[r][c]).epsilon(1e-15));
  }
}

TEST_CASE("sensor parsing accepts the classic space-delimited layout") {
  TempDir dir;
  auto path = dir.file("fd.txt");
  std::string row1 = "1 1 0.5 0.6 100.0";
  std::string row2 = "1 2 0.5 0.6 100.0";
  for (int i = 0; i < 21; ++i) {
    row1 += " " + std::to_string(10.0 + i);
    row2 += " " + std::to_string(11.0 + i);
  }
  write_text(path, row1 + " \n" + row2 + "\n\n");
  auto table = load_sensor_csv(path);
  REQUIRE(table.units.size() == 1);
  CHECK(table.units[0].unit_id == "1");
  CHECK(table.units[0].cycles == std::vector<int>{1, 2});
  CHECK(table.units[0].rows[0][0] == 0.5);
  CHECK(table.units[0].rows[1][3] == 11.0);
}

TEST_CASE("sensor parsing reorders cycles and keeps unit first appearance") {
  TempDir dir;
  auto path = dir.file("shuffled.csv");
  auto row = [](int unit, int cycle) {
    std::string s = std::to_string(unit) + "," + std::to_string(cycle) +
                    ",0,0,0";
    for (int i = 0; i < 21; ++i) s += "," + std::to_string(cycle * 100 + i);
    return s + "\n";
  };
  write_text(path, row(7, 2) + row(3, 1) + row(7, 1) + row(3, 2));
  auto table = load_sensor_csv(path);
  REQUIRE(table.units.size() == 2);
  CHECK(table.units[0].unit_id == "7");
  CHECK(table.units[1].unit_id == "3");
  CHECK(table.units[0].cycles == std::vector<int>{1, 2});
  CHECK(table.units[0].rows[0][3] == 100.0);
  CHECK(table.units[0].rows[1][3] == 200.0);
}

TEST_CASE("sensor parse failures name the offending line") {
  TempDir dir;
  auto ok = [](int cycle) {
    std::string s = "1," + std::to_string(cycle) + ",0,0,0";
    for (int i = 0; i < 21; ++i) s += ",1.5";
    return s + "\n";
  };

  auto ragged = dir.file("ragged.csv");
  write_text(ragged, ok(1) + "1,2,0,0\n");
  CHECK_THROWS_WITH_AS(load_sensor_csv(ragged), doctest::Contains("line 2"),
                       InputError);

  auto nonnum = dir.file("nonnum.csv");
  std::string bad = ok(2);
  bad.replace(bad.find("1.5"), 3, "abc");
  write_text(nonnum, ok(1) + bad);
  CHECK_THROWS_WITH_AS(load_sensor_csv(nonnum), doctest::Contains("line 2"),
                       InputError);

  auto dup = dir.file("dup.csv");
  write_text(dup, ok(1) + ok(1));
  CHECK_THROWS_AS(load_sensor_csv(dup), InputError);

  auto missing = dir.file("not-there.csv");
  CHECK_THROWS_AS(load_sensor_csv(missing), InputError);

  auto empty = dir.file("empty.csv");
  write_text(empty, "\n");
  CHECK_THROWS_AS(load_sensor_csv(empty), InputError);
}

TEST_CASE("an initial header row is tolerated") {
  TempDir dir;
  auto path = dir.file("with-header.csv");
  std::string header = "unit,cycle,setting_1,setting_2,setting_3";
  for (int i = 1; i <= 21; ++i) header += ",sensor_" + std::to_string(i);
  std::string row = "1,1,0,0,0";
  for (int i = 0; i < 21; ++i) row += ",2.0";
  write_text(path, header + "\n" + row + "\n");
  auto table = load_sensor_csv(path);
  CHECK(table.total_rows() == 1);
}

TEST_CASE("the fusion rule matches an exact eigensolve") {
  auto fx = fixtures::degradation_fixture(4, 0, 65);
  auto rule = fit_pca(fx.train);

  // Constant channels are dropped; the drifting ones stay.
  for (int dropped : {17, 18, 19, 20})
    CHECK(std::find(rule.retained.begin(), rule.retained.end(),
                    SensorTable::kNumSettings + dropped) ==
          rule.retained.end());
  CHECK(rule.retained.size() == 17);
  CHECK_NOTHROW(rule.validate());

  // Rebuild the correlation matrix directly and hand it to the Jacobi
  // eigensolver; the power-iteration loading must match its leading
  // eigenvector up to sign, and the explained share its eigenvalue.
  std::vector<std::vector<double>> rows;
  for (const auto& unit : fx.train.units)
    for (const auto& r : unit.rows) {
      std::vector<double> picked;
      for (int col : rule.retained) picked.push_back(r[col]);
      rows.push_back(std::move(picked));
    }
  const int d = static_cast<int>(rule.retained.size());
  const auto n = static_cast<double>(rows.size());
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (const auto& r : rows)
    for (int j = 0; j < d; ++j) mean[j] += r[j];
  for (int j = 0; j < d; ++j) mean[j] /= n;
  for (const auto& r : rows)
    for (int j = 0; j < d; ++j)
      sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  for (int j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j] / n);
  for (int j = 0; j < d; ++j) {
    CHECK(rule.mean[j] == doctest::Approx(mean[j]).epsilon(1e-10));
    CHECK(rule.scale[j] == doctest::Approx(sd[j]).epsilon(1e-10));
  }

  std::vector<double> corr(d * d, 0.0);
  for (const auto& r : rows)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        corr[a * d + b] += (r[a] - mean[a]) / sd[a] * (r[b] - mean[b]) / sd[b];
  for (double& x : corr) x /= n;

  auto eig = oracles::jacobi_symmetric(corr, d);
  CHECK(rule.explained_variance ==
        doctest::Approx(eig.values[0] / d).epsilon(1e-8));
  double dot = 0.0, norm = 0.0;
  for (int j = 0; j < d; ++j) {
    dot += rule.loading[j] * eig.vectors[0][j];
    norm += rule.loading[j] * rule.loading[j];
  }
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("fused scores rise over unit life") {
  auto fx = fixtures::degradation_fixture(4, 2, 66);
  auto rule = fit_pca(fx.train);
  auto trajs = fpc_transform(rule, fx.train);
  REQUIRE(trajs.size() == 4);
  int rising = 0;
  for (std::size_t u = 0; u < trajs.size(); ++u) {
    CHECK(trajs[u].dim() == 1);
    CHECK(trajs[u].values.size() == fx.train.units[u].rows.size());
    if (trajs[u].values.back()[0] > trajs[u].values.front()[0]) ++rising;
  }
  CHECK(rising == 4);  // orientation is part of the rule

  // Scoring data reuses the training rule unchanged.
  auto held_out = fpc_transform(rule, fx.test);
  CHECK(held_out.size() == 2);
}

TEST_CASE("fusion on hand-built numbers reproduces the arithmetic") {
  SensorTable table;
  SensorTable::Unit unit;
  unit.unit_id = "u";
  // Two perfectly correlated channels in columns 3 and 4, rest constant.
  for (int t = 0; t < 4; ++t) {
    unit.cycles.push_back(t + 1);
    std::vector<double> row(SensorTable::kNumColumns, 1.0);
    row[3] = static_cast<double>(t);       // sensor_1
    row[4] = 10.0 + 2.0 * t;               // sensor_2
    unit.rows.push_back(std::move(row));
  }
  table.units.push_back(std::move(unit));

  auto rule = fit_pca(table);
  REQUIRE(rule.retained == std::vector<int>{3, 4});
  // Correlation matrix [[1,1],[1,1]] -> leading eigenvector (1,1)/sqrt(2),
  // eigenvalue 2, explained share 1.
  CHECK(rule.explained_variance == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rule.loading[0] == doctest::Approx(rule.loading[1]).epsilon(1e-9));

  auto trajs = fpc_transform(rule, table);
  // Standardized columns are equal, the oriented loading is (1,1)/sqrt(2),
  // so the score is sqrt(2) * z_t.
  double z0 = (0.0 - 1.5) / std::sqrt(1.25);
  CHECK(trajs[0].values[0][0] ==
        doctest::Approx(std::sqrt(2.0) * z0).epsilon(1e-9));
  CHECK(trajs[0].values.back()[0] > trajs[0].values.front()[0]);

  SensorTable all_const;
  all_const.units.push_back({});
  all_const.units[0].unit_id = "c";
  for (int t = 0; t < 3; ++t) {
    all_const.units[0].cycles.push_back(t + 1);
    all_const.units[0].rows.push_back(
        std::vector<double>(SensorTable::kNumColumns, 5.0));
  }
  CHECK_THROWS_WITH_AS(fit_pca(all_const),
                       doctest::Contains("every candidate column"),
                       InputError);
}

TEST_CASE("trajectory CSV files round trip") {
  TempDir dir;
  std::vector<Trajectory> trajs(2);
  trajs[0].unit_id = "alpha";
  trajs[0].values = {{1.25}, {-0.5}, {3.75}};
  trajs[1].unit_id = "beta";
  trajs[1].values = {{0.001220703125}, {7.0}};
  auto path = dir.file("t.csv");
  write_trajectories_csv(trajs, path);
  auto loaded = load_trajectories_csv(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].unit_id == "alpha");
  CHECK(loaded[0].values == trajs[0].values);
  CHECK(loaded[1].values == trajs[1].values);
}

TEST_CASE("trajectory CSV parsing is strict") {
  TempDir dir;
  auto no_header = dir.file("nh.csv");
  write_text(no_header, "u,1,0.5\n");
  CHECK_THROWS_WITH_AS(load_trajectories_csv(no_header),
                       doctest::Contains("header"), InputError);

  auto dup = dir.file("dup.csv");
  write_text(dup, "unit,cycle,value\nu,1,0.5\nu,1,0.6\n");
  CHECK_THROWS_WITH_AS(load_trajectories_csv(dup),
                       doctest::Contains("line 3"), InputError);

  auto bad_val = dir.file("bv.csv");
  write_text(bad_val, "unit,cycle,value\nu,1,zap\n");
  CHECK_THROWS_AS(load_trajectories_csv(bad_val), InputError);

  auto none = dir.file("none.csv");
  write_text(none, "unit,cycle,value\n");
  CHECK_THROWS_AS(load_trajectories_csv(none), InputError);
}
