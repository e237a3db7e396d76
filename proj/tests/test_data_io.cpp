#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "fetr/config_json.hpp"
#include "fetr/data_io.hpp"
#include "fetr/errors.hpp"
#include "fetr/trainer.hpp"
#include "oracles.hpp"

using namespace fetr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fetr_test_data_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("generate_synthetic") {
  const MultitaskDataset a = io::generate_synthetic(50, 4, 3, 11);
  const MultitaskDataset b = io::generate_synthetic(50, 4, 3, 11);
  CHECK(a == b);
  CHECK_FALSE(a == io::generate_synthetic(50, 4, 3, 12));
  CHECK(a.shared_instances());
  CHECK(a.shared_features().minCoeff() >= 0.0);
  CHECK(a.shared_features().maxCoeff() <= 1.0);

  const MultitaskDataset big = io::generate_synthetic(10000, 10, 5, 1);
  CHECK(big.shared_features().rows() == 10000);
  CHECK(big.shared_features().cols() == 10);
  CHECK(big.shared_targets().cols() == 5);
}

TEST_CASE("CSV round trip is exact") {
  const fs::path dir = scratch_dir("csv");
  std::mt19937_64 rng(71);
  Matrix m = oracle::gaussian(rng, 7, 4, 1e3);
  m(0, 0) = 1e-300;
  m(1, 1) = -0.1;
  io::write_csv_matrix(dir / "m.csv", m);
  CHECK(io::read_csv_matrix(dir / "m.csv") == m);

  write_text(dir / "header.csv", "a,b\n1,2\n3,4\n");
  const Matrix h = io::read_csv_matrix(dir / "header.csv", true);
  CHECK(h.rows() == 2);
  CHECK(h(1, 0) == 3.0);
}

TEST_CASE("CSV parse errors carry file and line") {
  const fs::path dir = scratch_dir("csv_errors");
  write_text(dir / "ragged.csv", "1,2\n3\n");
  try {
    io::read_csv_matrix(dir / "ragged.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("ragged.csv:2") != std::string::npos);
  }
  write_text(dir / "text.csv", "1,2\n3,x\n");
  CHECK_THROWS_AS(io::read_csv_matrix(dir / "text.csv"), ParseError);
  CHECK_THROWS_AS(io::read_csv_matrix(dir / "missing.csv"), ParseError);
}

TEST_CASE("manifest loading") {
  const fs::path fixture = FETR_FIXTURE_DIR;
  const MultitaskDataset shared = io::load_manifest(fixture / "shared.json");
  CHECK(shared.shared_instances());
  CHECK(shared.dim() == 3);
  CHECK(shared.num_tasks() == 2);
  CHECK(shared.task_size(0) == 20);

  const MultitaskDataset per_task = io::load_manifest(fixture / "per_task.json");
  CHECK_FALSE(per_task.shared_instances());
  CHECK(per_task.num_tasks() == 3);
  CHECK(per_task.task_size(0) == 12);

  const fs::path dir = scratch_dir("manifest");
  write_text(dir / "x.csv", "1,2,3\n4,5,6\n7,8,9\n1,0,0\n");
  write_text(dir / "y.csv", "1,2\n3,4\n5,6\n7,8\n");
  write_text(dir / "y_short.csv", "1,2\n3,4\n5,6\n");
  write_text(dir / "ok.json",
             R"({"format_version": 1, "d": 3, "shared_features_csv": "x.csv", "shared_targets_csv": "y.csv"})");
  const MultitaskDataset small = io::load_manifest(dir / "ok.json");
  CHECK(small.dim() == 3);
  CHECK(small.num_tasks() == 2);

  write_text(dir / "short.json",
             R"({"format_version": 1, "shared_features_csv": "x.csv", "shared_targets_csv": "y_short.csv"})");
  CHECK_THROWS_AS(io::load_manifest(dir / "short.json"), ParseError);
  write_text(dir / "both.json",
             R"({"format_version": 1, "shared_features_csv": "x.csv",
                 "tasks": [{"name": "t", "features_csv": "x.csv", "targets_csv": "y.csv"}]})");
  CHECK_THROWS_AS(io::load_manifest(dir / "both.json"), ParseError);
  write_text(dir / "version.json", R"({"format_version": 2})");
  CHECK_THROWS_AS(io::load_manifest(dir / "version.json"), ParseError);
  write_text(dir / "wrong_d.json",
             R"({"format_version": 1, "d": 4, "shared_features_csv": "x.csv", "shared_targets_csv": "y.csv"})");
  CHECK_THROWS_AS(io::load_manifest(dir / "wrong_d.json"), DimensionError);
  CHECK_THROWS_AS(io::load_manifest(dir / "absent.json"), ParseError);
}

TEST_CASE("write_dataset round trip") {
  const fs::path dir = scratch_dir("write_dataset");
  const MultitaskDataset shared = io::generate_synthetic(9, 3, 2, 5);
  io::write_dataset(shared, dir / "shared.json");
  CHECK(io::load_manifest(dir / "shared.json") == shared);

  const MultitaskDataset per_task = io::load_manifest(fs::path(FETR_FIXTURE_DIR) / "per_task.json");
  io::write_dataset(per_task, dir / "per_task.json");
  CHECK(io::load_manifest(dir / "per_task.json") == per_task);
}

TEST_CASE("kfold_split partitions every task") {
  std::mt19937_64 rng(72);
  std::vector<TaskData> raw;
  for (int t = 0; t < 3; ++t) {
    const Index n = 10 + 3 * t;
    Matrix x(n, 1);
    for (Index r = 0; r < n; ++r) x(r, 0) = static_cast<double>(r);  // row id
    raw.push_back({x, Vector::Zero(n)});
  }
  const MultitaskDataset data = validate_dataset(raw);
  const auto folds = io::kfold_split(data, 4, 3);
  REQUIRE(folds.size() == 4);
  for (Index t = 0; t < 3; ++t) {
    std::multiset<double> seen;
    for (const io::Split& s : folds) {
      CHECK(s.train.task_size(t) + s.test.task_size(t) == data.task_size(t));
      const Matrix& xt = s.test.features(t);
      for (Index r = 0; r < xt.rows(); ++r) seen.insert(xt(r, 0));
      std::set<double> train_rows;
      const Matrix& xr = s.train.features(t);
      for (Index r = 0; r < xr.rows(); ++r) train_rows.insert(xr(r, 0));
      for (Index r = 0; r < xt.rows(); ++r) CHECK(train_rows.count(xt(r, 0)) == 0);
    }
    CHECK(seen.size() == static_cast<std::size_t>(data.task_size(t)));
    CHECK(std::set<double>(seen.begin(), seen.end()).size() == seen.size());
  }
  const auto again = io::kfold_split(data, 4, 3);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    CHECK(folds[f].train == again[f].train);
    CHECK(folds[f].test == again[f].test);
  }
  CHECK_THROWS_AS(io::kfold_split(data, 1, 0), SplitError);
  CHECK_THROWS_AS(io::kfold_split(data, 11, 0), SplitError);
}

TEST_CASE("kfold_split keeps shared data shared") {
  const MultitaskDataset data = io::generate_synthetic(23, 2, 3, 4);
  for (const io::Split& s : io::kfold_split(data, 5, 9)) {
    CHECK(s.train.shared_instances());
    CHECK(s.test.shared_instances());
  }
}

TEST_CASE("holdout_split") {
  const MultitaskDataset data = io::generate_synthetic(20, 2, 2, 4);
  const io::Split s = io::holdout_split(data, 0.75, 1);
  CHECK(s.train.task_size(0) == 15);
  CHECK(s.test.task_size(0) == 5);
  CHECK_THROWS_AS(io::holdout_split(data, 1.0, 1), SplitError);
}

TEST_CASE("random Fourier features") {
  SUBCASE("frozen map gives constant features") {
    const io::RffMap frozen{Matrix::Zero(3, 2), Vector::Zero(2)};
    const Matrix z = io::apply_rff(frozen, Matrix::Random(5, 3));
    CHECK((z - Matrix::Ones(5, 2)).norm() <= 1e-15);
  }
  SUBCASE("determinism and shape") {
    const MultitaskDataset data = io::generate_synthetic(10, 3, 2, 1);
    const MultitaskDataset a = io::rff_transform(data, 8, 1.0, 5, false);
    CHECK(a == io::rff_transform(data, 8, 1.0, 5, false));
    CHECK(a.dim() == 8);
    CHECK(a.shared_instances());
    CHECK_THROWS_AS(io::rff_transform(data, 3, 1.0, 5, false), InvalidArgument);
    CHECK_THROWS_AS(io::rff_transform(data, 4, 0.0, 5, false), InvalidArgument);
  }
  SUBCASE("orthogonal blocks have orthogonal directions") {
    const io::RffMap map = io::make_rff_map(4, 4, 1.0, 3, true);
    const Matrix g = map.omega.transpose() * map.omega;
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j)
        if (i != j) CHECK(std::abs(g(i, j)) <= 1e-10 * std::sqrt(g(i, i) * g(j, j)));
  }
  SUBCASE("seed-averaged inner product approximates the RBF kernel") {
    std::mt19937_64 rng(73);
    const double bandwidth = 1.5;
    for (int pair = 0; pair < 3; ++pair) {
      const Matrix xy = oracle::gaussian(rng, 2, 3, 0.8);
      const double kernel = std::exp(-(xy.row(0) - xy.row(1)).squaredNorm() / (2.0 * bandwidth * bandwidth));
      for (bool orthogonal : {false, true}) {
        double mean = 0.0;
        const int seeds = 20000;
        for (int s = 0; s < seeds; ++s) {
          const Matrix z = io::apply_rff(io::make_rff_map(3, 2, bandwidth, static_cast<std::uint64_t>(s), orthogonal), xy);
          mean += z.row(0).dot(z.row(1));
        }
        mean /= seeds;
        CHECK(std::abs(mean - kernel) <= 0.02);
      }
    }
  }
}

TEST_CASE("write_report bundle") {
  const fs::path dir = scratch_dir("report");
  const MultitaskDataset data = io::generate_synthetic(60, 4, 3, 2);
  FetrConfig config;
  config.eta = 0.5;
  config.lower = 0.01;
  config.upper = 100.0;
  const FetrModel model = fit_fetr(data, config);
  const auto files = io::write_report(model.report, model, (dir / "run").string());
  REQUIRE(files.size() == 5);
  for (const fs::path& f : files) CHECK(fs::exists(f));

  CHECK(io::read_csv_matrix(dir / "run.weights.csv") == model.weights.matrix());
  CHECK(io::read_csv_matrix(dir / "run.sigma1.csv") == model.covariances.sigma1());

  std::ifstream trace(dir / "run.trace.csv");
  std::string line;
  std::getline(trace, line);
  CHECK(line == "iteration,block,seconds,objective");
  int rows = 0;
  while (std::getline(trace, line)) ++rows;
  CHECK(rows == 3 * model.report.iterations + 1);

  std::ifstream report(dir / "run.report.json");
  const nlohmann::json j = nlohmann::json::parse(report);
  CHECK(j["config"]["eta"].get<double>() == 0.5);
  CHECK(j["config"]["l"].get<double>() == 0.01);
  CHECK(j["config"]["u"].get<double>() == 100.0);
  CHECK(j["iterations"].get<int>() == model.report.iterations);

  CHECK_THROWS_AS(io::write_report(model.report, model, (dir / "missing" / "run").string()), IoError);
}

TEST_CASE("config JSON round trip") {
  FetrConfig c;
  c.eta = 3.0;
  c.w_solver = WSolverKind::Sylvester;
  c.seed = 17;
  const FetrConfig back = io::config_from_json(io::config_to_json(c));
  CHECK(back.eta == 3.0);
  CHECK(back.w_solver == WSolverKind::Sylvester);
  CHECK(back.seed == 17);
  CHECK(io::config_from_json(nlohmann::json{{"u", 5.0}}).upper == 5.0);
  CHECK_THROWS_AS(io::config_from_json(nlohmann::json{{"bogus", 1}}), InvalidArgument);
}
