#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fetr/baselines.hpp"
#include "fetr/config_json.hpp"
#include "fetr/data_io.hpp"
#include "fetr/errors.hpp"
#include "fetr/trainer.hpp"
#include "fetr/w_solvers.hpp"

namespace fetr::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Argument: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Solver: return 4;
  }
  return 4;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("cannot parse " + what + " from '" + text + "'");
  }
  if (used != text.size()) throw InvalidArgument("cannot parse " + what + " from '" + text + "'");
  return v;
}

Index parse_index(const std::string& text, const std::string& what) {
  const double v = parse_number(text, what);
  if (v != std::floor(v) || v < 1) throw InvalidArgument(what + " must be a positive integer");
  return static_cast<Index>(v);
}

struct RffSpec {
  Index p = 0;
  double bandwidth = 1.0;
};

RffSpec parse_rff(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.empty() || parts.size() > 2) throw InvalidArgument("--rff expects p or p,bandwidth");
  RffSpec s;
  s.p = parse_index(parts[0], "--rff p");
  if (parts.size() == 2) s.bandwidth = parse_number(parts[1], "--rff bandwidth");
  return s;
}

MetricKind parse_metric(const std::string& text) {
  if (text == "mse") return MetricKind::MSE;
  if (text == "nmse") return MetricKind::NMSE;
  throw InvalidArgument("unknown metric '" + text + "' (expected mse or nmse)");
}

// Flags shared by every subcommand that builds a FetrConfig.
struct ConfigFlags {
  std::string config_path;
  double eta = 1.0;
  double lower = 1e-3;
  double upper = 1e3;
  std::string w_solver = "auto";
  int max_iters = 100;
  double tol = 1e-8;
  std::uint64_t seed = 0;

  CLI::Option* eta_opt = nullptr;
  CLI::Option* l_opt = nullptr;
  CLI::Option* u_opt = nullptr;
  CLI::Option* solver_opt = nullptr;
  CLI::Option* iters_opt = nullptr;
  CLI::Option* tol_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* app, bool with_eta = true) {
    app->add_option("--config", config_path, "JSON config (same schema as the report's config echo)");
    if (with_eta) eta_opt = app->add_option("--eta", eta, "regularization weight");
    l_opt = app->add_option("--l", lower, "lower spectrum bound");
    u_opt = app->add_option("--u", upper, "upper spectrum bound");
    solver_opt = app->add_option("--w-solver", w_solver, "auto|closed|gd|sylvester");
    iters_opt = app->add_option("--max-iters", max_iters, "outer iteration cap");
    tol_opt = app->add_option("--tol", tol, "relative objective tolerance");
    seed_opt = app->add_option("--seed", seed, "random seed");
  }

  // flags > config file > defaults
  FetrConfig resolve(FetrConfig defaults) const {
    FetrConfig c = defaults;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InvalidArgument("cannot open config '" + config_path + "'");
      json j;
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw InvalidArgument("config '" + config_path + "' is not valid JSON: " + e.what());
      }
      c = io::config_from_json(j, c);
    }
    if (eta_opt && eta_opt->count()) c.eta = eta;
    if (l_opt->count()) c.lower = lower;
    if (u_opt->count()) c.upper = upper;
    if (solver_opt->count()) c.w_solver = parse_w_solver(w_solver);
    if (iters_opt->count()) c.max_outer_iters = max_iters;
    if (tol_opt->count()) c.rel_obj_tol = tol;
    if (seed_opt->count()) c.seed = seed;
    c.validate();
    return c;
  }
};

MultitaskDataset load_with_rff(const std::string& manifest, const std::string& rff, bool orthogonal,
                               std::uint64_t seed) {
  MultitaskDataset data = io::load_manifest(manifest);
  if (!rff.empty()) {
    const RffSpec s = parse_rff(rff);
    data = io::rff_transform(data, s.p, s.bandwidth, seed, orthogonal);
  }
  return data;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---- train ----

struct TrainArgs {
  ConfigFlags flags;
  std::string manifest;
  std::string rff;
  bool rff_orthogonal = false;
  std::string out = "fetr_train";
  std::string metric = "mse";
};

int cmd_train(const TrainArgs& a) {
  const FetrConfig config = a.flags.resolve(FetrConfig{});
  const MultitaskDataset data = load_with_rff(a.manifest, a.rff, a.rff_orthogonal, config.seed);
  const MetricKind kind = parse_metric(a.metric);
  const FetrModel model = fit_fetr(data, config);
  const MetricResult metric =
      metrics(dataset_targets(data), predict_dataset(model.weights.matrix(), data), kind);
  io::write_report(model.report, model, a.out, {metric, a.metric, a.manifest});
  std::cout << "iterations " << model.report.iterations << " (" << model.report.stop_reason << ")\n"
            << "objective " << model.report.final_objective() << '\n'
            << "train_" << a.metric << ' ' << metric.aggregate << '\n';
  return 0;
}

// ---- cv ----

struct CvArgs {
  ConfigFlags flags;
  std::string manifest;
  std::string rff;
  bool rff_orthogonal = false;
  int folds = 10;
  std::string eta_grid = "1e-5..1e3";
  std::string metric = "nmse";
  std::string out;
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; zero for a single value.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int cmd_cv(const CvArgs& a) {
  const FetrConfig base = a.flags.resolve(FetrConfig{});
  const MultitaskDataset data = load_with_rff(a.manifest, a.rff, a.rff_orthogonal, base.seed);
  const MetricKind kind = parse_metric(a.metric);
  const std::vector<double> grid = parse_eta_grid(a.eta_grid);
  const std::vector<io::Split> splits = io::kfold_split(data, a.folds, base.seed);

  json rows = json::array();
  std::optional<std::size_t> best;
  std::vector<double> means;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    FetrConfig config = base;
    config.eta = grid[g];
    std::vector<double> values;
    for (const io::Split& s : splits) {
      const FetrModel model = fit_fetr(s.train, config);
      values.push_back(
          metrics(dataset_targets(s.test), predict_dataset(model.weights.matrix(), s.test), kind).aggregate);
    }
    means.push_back(mean_of(values));
    rows.push_back({{"eta", grid[g]}, {"mean", means.back()}, {"std", std_of(values)}, {"folds", values}});
    if (!best || means.back() < means[*best]) best = g;
  }

  json out{{"metric", a.metric},
           {"folds", a.folds},
           {"seed", base.seed},
           {"config", io::config_to_json(base)},
           {"grid", rows},
           {"best", {{"eta", grid[*best]}, {"mean", rows[*best]["mean"]}, {"std", rows[*best]["std"]}}}};
  out["config"].erase("eta");
  if (!a.out.empty()) write_json(a.out, out);
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---- bench-w ----

struct BenchArgs {
  ConfigFlags flags;
  Index n = 10000;
  std::string grid = "10,10;20,20;40,40;60,60;100,100";
  int repeats = 10;
  Index guard = kDefaultClosedFormGuard;
  std::string out;
};

std::vector<std::pair<Index, Index>> parse_grid(const std::string& text) {
  std::vector<std::pair<Index, Index>> cells;
  for (const std::string& cell : split(text, ';')) {
    const auto dm = split(cell, ',');
    if (dm.size() != 2) throw InvalidArgument("grid cells must look like d,m (got '" + cell + "')");
    cells.emplace_back(parse_index(dm[0], "grid d"), parse_index(dm[1], "grid m"));
  }
  if (cells.empty()) throw InvalidArgument("empty --grid");
  return cells;
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

int cmd_bench(const BenchArgs& a) {
  FetrConfig defaults;
  defaults.lower = 0.01;
  defaults.upper = 100.0;
  const FetrConfig config = a.flags.resolve(defaults);
  if (a.repeats < 1) throw InvalidArgument("--repeats must be at least 1");
  if (a.n < 1) throw InvalidArgument("--n must be positive");
  const auto cells = parse_grid(a.grid);

  std::ostringstream csv;
  csv << "d,m,solver,status,repeats,mean_seconds,var_seconds,max_rel_diff,samples\n";
  bool disagreement = false;
  std::uint64_t cell_seed = config.seed;
  for (const auto& [d, m] : cells) {
    const MultitaskDataset data = io::generate_synthetic(a.n, d, m, cell_seed++);
    const Matrix s1 = io::random_bounded_spd(d, config.lower, config.upper, cell_seed++);
    const Matrix s2 = io::random_bounded_spd(m, config.lower, config.upper, cell_seed++);
    const QuadraticCache cache = make_quadratic_cache(data);
    const StepSchedule schedule = step_schedule(cache.gram_eigs, config.eta, config.lower, config.upper);

    struct Row {
      std::string name;
      std::string status;
      std::vector<double> samples;
      std::optional<Matrix> w;
    };
    std::vector<Row> rows;
    for (WSolverKind kind : {WSolverKind::ClosedForm, WSolverKind::GradientDescent, WSolverKind::Sylvester}) {
      Row row{to_string(kind), "ok", {}, std::nullopt};
      if (kind == WSolverKind::ClosedForm && d * m > a.guard) {
        row.status = "capacity";
        rows.push_back(std::move(row));
        continue;
      }
      auto run = [&]() -> Matrix {
        switch (kind) {
          case WSolverKind::ClosedForm:
            return solve_w_closed(cache, s1, s2, config.eta, a.guard).matrix();
          case WSolverKind::GradientDescent:
            return solve_w_gd(cache, s1, s2, config.eta, schedule, Matrix::Zero(d, m), config.gd_max_iters,
                              config.gd_rel_tol)
                .weights.matrix();
          default:
            return solve_w_sylvester(cache, s1, s2, config.eta).matrix();
        }
      };
      row.w = run();  // warm-up, excluded from timings
      for (int r = 0; r < a.repeats; ++r) {
        const Clock::time_point t0 = Clock::now();
        row.w = run();
        row.samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      }
      rows.push_back(std::move(row));
    }

    double max_diff = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j)
        if (rows[i].w && rows[j].w) max_diff = std::max(max_diff, relative_frobenius(*rows[i].w, *rows[j].w));
    const bool agree = max_diff <= 1e-6;
    if (!agree) disagreement = true;

    for (Row& row : rows) {
      if (row.status == "ok" && !agree) row.status = "disagree";
      double mean = 0.0, var = 0.0;
      if (!row.samples.empty()) {
        mean = mean_of(row.samples);
        for (double s : row.samples) var += (s - mean) * (s - mean);
        var = row.samples.size() > 1 ? var / static_cast<double>(row.samples.size() - 1) : 0.0;
      }
      csv << d << ',' << m << ',' << row.name << ',' << row.status << ',' << row.samples.size() << ','
          << mean << ',' << var << ',' << max_diff << ',';
      for (std::size_t k = 0; k < row.samples.size(); ++k) csv << (k ? ";" : "") << row.samples[k];
      csv << '\n';
    }
  }

  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot open '" + a.out + "' for writing");
    out << csv.str();
    std::cout << "wrote " << a.out << '\n';
  }
  if (disagreement) throw ConsistencyError("W-solvers disagree by more than 1e-6 relative Frobenius");
  return 0;
}

// ---- compare ----

struct CompareArgs {
  ConfigFlags flags;
  std::string manifest;
  std::string synthetic;
  double budget = 20.0;
  double fudge = 1e-3;
  std::string out = "fetr_compare";
};

std::optional<long> evaluations_to_reach(const TrainReport& report, double target) {
  for (const TracePoint& p : report.objective_trace)
    if (p.objective <= target) return p.evaluations;
  return std::nullopt;
}

void write_compare_trace(const TrainReport& report, double reference, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "seconds,evaluations,objective,log10_excess\n";
  out.precision(17);
  const double floor = 1e-12 * (1.0 + std::abs(reference));
  for (const TracePoint& p : report.objective_trace) {
    out << p.seconds << ',' << p.evaluations << ',' << p.objective << ','
        << std::log10(std::max(p.objective - reference, floor)) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

int cmd_compare(const CompareArgs& a) {
  FetrConfig defaults;
  defaults.lower = 0.01;
  defaults.upper = 100.0;
  FetrConfig config = a.flags.resolve(defaults);
  if (!(a.budget > 0.0)) throw InvalidArgument("--budget-seconds must be positive");
  if (a.fudge < 0.0) throw InvalidArgument("--fudge must be nonnegative");
  if (a.manifest.empty() == a.synthetic.empty()) {
    throw InvalidArgument("compare needs exactly one of --manifest or --synthetic");
  }
  MultitaskDataset data = [&] {
    if (!a.manifest.empty()) return io::load_manifest(a.manifest);
    const auto parts = split(a.synthetic, ',');
    if (parts.size() != 3) throw InvalidArgument("--synthetic expects n,d,m");
    return io::generate_synthetic(parse_index(parts[0], "n"), parse_index(parts[1], "d"),
                                  parse_index(parts[2], "m"), config.seed);
  }();
  config.time_budget_seconds = a.budget;

  const FetrModel fetr = fit_fetr(data, config);

  FetrConfig pgd_config = config;
  pgd_config.max_outer_iters = std::numeric_limits<int>::max();
  const FetrModel pgd = fit_projected_gd(data, pgd_config);

  FlipFlopOptions ff;
  ff.eta = config.eta;
  ff.epsilon = a.fudge;
  ff.lower = config.lower;
  ff.upper = config.upper;
  ff.max_iters = config.max_outer_iters;
  ff.tol = config.rel_obj_tol;
  ff.w_solver = config.w_solver;
  ff.time_budget_seconds = a.budget;
  const FetrModel flipflop = fit_mtfrl_flipflop(data, ff);

  const double f_final = fetr.report.final_objective();
  const double reference =
      std::min({f_final, pgd.report.final_objective(), flipflop.report.final_objective()});
  const double target = f_final + 1e-4 * std::abs(f_final);

  json methods = json::object();
  auto describe = [&](const std::string& name, const FetrModel& model) {
    const fs::path trace = a.out + "." + name + ".trace.csv";
    write_compare_trace(model.report, reference, trace);
    const auto reach = evaluations_to_reach(model.report, target);
    methods[name] = {{"final_objective", model.report.final_objective()},
                     {"iterations", model.report.iterations},
                     {"evaluations", model.report.objective_evaluations},
                     {"seconds", model.report.objective_trace.back().seconds},
                     {"stop_reason", model.report.stop_reason},
                     {"evaluations_to_target", reach ? json(*reach) : json(nullptr)},
                     {"trace", trace.string()}};
  };
  describe("fetr", fetr);
  describe("projected_gd", pgd);
  describe("flipflop", flipflop);

  const long fetr_evals = methods["fetr"]["evaluations_to_target"].get<long>();
  const json& pgd_reach = methods["projected_gd"]["evaluations_to_target"];
  const long pgd_evals = pgd_reach.is_null() ? pgd.report.objective_evaluations : pgd_reach.get<long>();
  const bool fetr_best = f_final <= pgd.report.final_objective() + 1e-6 &&
                         f_final <= flipflop.report.final_objective() + 1e-6;

  json summary{{"budget_seconds", a.budget},
               {"fudge", a.fudge},
               {"config", io::config_to_json(config)},
               {"target_objective", target},
               {"methods", methods},
               {"flipflop_singular", flipflop.report.stop_reason == "singular"},
               {"fetr_best", fetr_best},
               {"fetr_fewer_evaluations_than_projected_gd", fetr_evals < pgd_evals}};
  const fs::path summary_path = a.out + ".summary.json";
  write_json(summary_path, summary);
  std::cout << "fetr " << f_final << " (" << fetr.report.objective_evaluations << " evals)\n"
            << "projected_gd " << pgd.report.final_objective() << " ("
            << pgd.report.objective_evaluations << " evals)\n"
            << "flipflop " << flipflop.report.final_objective() << " (" << flipflop.report.stop_reason
            << ")\n"
            << "summary " << summary_path.string() << '\n';
  return 0;
}

}  // namespace

std::vector<double> parse_eta_grid(const std::string& text) {
  std::vector<double> grid;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const double lo = parse_number(text.substr(0, dots), "grid start");
    const double hi = parse_number(text.substr(dots + 2), "grid end");
    if (!(lo > 0.0) || !(hi >= lo)) throw InvalidArgument("eta grid needs 0 < start <= end");
    const int a = static_cast<int>(std::lround(std::log10(lo)));
    const int b = static_cast<int>(std::lround(std::log10(hi)));
    for (int k = a; k <= b; ++k) grid.push_back(std::pow(10.0, k));
  } else {
    for (const std::string& item : split(text, ',')) grid.push_back(parse_number(item, "eta"));
  }
  if (grid.empty()) throw InvalidArgument("empty eta grid");
  for (double eta : grid)
    if (!(eta > 0.0)) throw InvalidArgument("eta values must be positive");
  return grid;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"FETR multitask regression: train, cross-validate and benchmark"};
  app.require_subcommand(1);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "fit FETR on a manifest and write a report bundle");
  train_cmd->add_option("--manifest", train.manifest, "dataset manifest (JSON)")->required();
  train.flags.attach(train_cmd);
  train_cmd->add_option("--rff", train.rff, "random Fourier features: p[,bandwidth]");
  train_cmd->add_flag("--rff-orthogonal", train.rff_orthogonal, "orthogonal random features");
  train_cmd->add_option("--out", train.out, "output prefix");
  train_cmd->add_option("--metric", train.metric, "mse|nmse");

  CvArgs cv;
  CLI::App* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation over an eta grid");
  cv_cmd->add_option("--manifest", cv.manifest, "dataset manifest (JSON)")->required();
  cv.flags.attach(cv_cmd, false);
  cv_cmd->add_option("--folds", cv.folds, "number of folds");
  cv_cmd->add_option("--eta-grid", cv.eta_grid, "a..b (decades) or comma list");
  cv_cmd->add_option("--metric", cv.metric, "mse|nmse");
  cv_cmd->add_option("--rff", cv.rff, "random Fourier features: p[,bandwidth]");
  cv_cmd->add_flag("--rff-orthogonal", cv.rff_orthogonal, "orthogonal random features");
  cv_cmd->add_option("--out", cv.out, "also write the JSON result here");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench-w", "time the three W-subproblem solvers");
  bench.flags.attach(bench_cmd);
  bench_cmd->add_option("--n", bench.n, "instances");
  bench_cmd->add_option("--grid", bench.grid, "d,m pairs separated by ';'");
  bench_cmd->add_option("--repeats", bench.repeats, "timed repeats per solver");
  bench_cmd->add_option("--guard", bench.guard, "largest md for the closed form");
  bench_cmd->add_option("--out", bench.out, "CSV output path (stdout if omitted)");

  CompareArgs compare;
  CLI::App* compare_cmd = app.add_subcommand("compare", "FETR vs projected GD vs flip-flop");
  compare_cmd->add_option("--manifest", compare.manifest, "dataset manifest (JSON)");
  compare_cmd->add_option("--synthetic", compare.synthetic, "n,d,m synthetic dataset");
  compare.flags.attach(compare_cmd);
  compare_cmd->add_option("--budget-seconds", compare.budget, "wall-clock budget per method");
  compare_cmd->add_option("--fudge", compare.fudge, "flip-flop fudge factor");
  compare_cmd->add_option("--out", compare.out, "output prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*cv_cmd) return cmd_cv(cv);
    if (*bench_cmd) return cmd_bench(bench);
    if (*compare_cmd) return cmd_compare(compare);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.category()) << "): " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"fetr"};
  for (const std::string& s : args) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace fetr::cli
