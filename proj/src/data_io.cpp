#include "fetr/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fetr/config_json.hpp"
#include "fetr/errors.hpp"

namespace fetr::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string location(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_cell(std::string_view cell, const fs::path& path, std::size_t line) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError(location(path, line) + ": non-numeric cell '" + std::string(cell) + "'");
  }
  return value;
}

std::vector<Index> shuffled_rows(Index n, std::mt19937_64& rng) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

Vector take_rows(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
  return out;
}

// Splits a permuted row list into (selected, rest) by position range [begin, end).
std::pair<std::vector<Index>, std::vector<Index>> partition_rows(const std::vector<Index>& perm,
                                                                 std::size_t begin,
                                                                 std::size_t end) {
  std::vector<Index> inside(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                            perm.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<Index> outside;
  outside.reserve(perm.size() - inside.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (i < begin || i >= end) outside.push_back(perm[i]);
  }
  return {std::move(inside), std::move(outside)};
}

// Builds (selected, rest) datasets from per-task row lists.
Split split_by_rows(const MultitaskDataset& data,
                    const std::vector<std::pair<std::vector<Index>, std::vector<Index>>>& rows) {
  if (data.shared_instances()) {
    const auto& [sel, rest] = rows.front();
    const Matrix& x = data.shared_features();
    const Matrix& y = data.shared_targets();
    return {MultitaskDataset::from_shared(take_rows(x, rest), take_rows(y, rest)),
            MultitaskDataset::from_shared(take_rows(x, sel), take_rows(y, sel))};
  }
  std::vector<TaskData> train;
  std::vector<TaskData> test;
  for (Index i = 0; i < data.num_tasks(); ++i) {
    const auto& [sel, rest] = rows[static_cast<std::size_t>(i)];
    const Matrix& x = data.features(i);
    const Vector y = data.targets(i);
    train.push_back({take_rows(x, rest), take_rows(y, rest)});
    test.push_back({take_rows(x, sel), take_rows(y, sel)});
  }
  return {validate_dataset(std::move(train)), validate_dataset(std::move(test))};
}

std::string format_double(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_output(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

fs::path resolve(const DatasetManifest& manifest, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : manifest.base_dir / path;
}

}  // namespace

MultitaskDataset generate_synthetic(Index n, Index d, Index m, std::uint64_t seed) {
  if (n < 1 || d < 1 || m < 1) throw InvalidArgument("synthetic sizes must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = uniform(rng);
  }
  Matrix w0(d, m);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < d; ++i) w0(i, j) = normal(rng);
  }
  Matrix y = x * w0;
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) y(i, j) += 0.01 * normal(rng);
  }
  return MultitaskDataset::from_shared(std::move(x), std::move(y));
}

Matrix random_bounded_spd(Index k, double lower, double upper, std::uint64_t seed) {
  if (!(lower > 0.0) || !(upper > lower)) throw InvalidArgument("bounds must satisfy 0 < l < u");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(std::log(lower), std::log(upper));
  Matrix g(k, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < k; ++i) g(i, j) = normal(rng);
  }
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  Vector values(k);
  for (Index i = 0; i < k; ++i) values(i) = std::exp(uniform(rng));
  const Matrix s = q * values.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

Matrix read_csv_matrix(const fs::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    Index count = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = view.find(',', pos);
      const std::string_view cell =
          view.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      values.push_back(parse_cell(cell, path, line_no));
      ++count;
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (cols < 0) {
      cols = count;
    } else if (count != cols) {
      throw ParseError(location(path, line_no) + ": row has " + std::to_string(count) +
                       " cells, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(path.string() + ": no data rows");
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) out(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  }
  return out;
}

void write_csv_matrix(const fs::path& path, const Matrix& m) {
  std::ofstream out = open_output(path);
  std::string row;
  for (Index r = 0; r < m.rows(); ++r) {
    row.clear();
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) row += ',';
      row += format_double(m(r, c));
    }
    row += '\n';
    out << row;
  }
  finish_output(out, path);
}

DatasetManifest parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open manifest");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
      throw ParseError(path.string() + ": unsupported format_version " +
                       std::to_string(m.format_version));
    }
    m.d = j.value("d", Index{0});
    m.has_header = j.value("has_header", false);
    if (j.contains("shared_features_csv")) m.shared_features_csv = j["shared_features_csv"].get<std::string>();
    if (j.contains("shared_targets_csv")) m.shared_targets_csv = j["shared_targets_csv"].get<std::string>();
    for (const json& t : j.value("tasks", json::array())) {
      ManifestTask task;
      task.name = t.value("name", std::string());
      task.features_csv = t.value("features_csv", std::string());
      task.targets_csv = t.value("targets_csv", std::string());
      m.tasks.push_back(std::move(task));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": malformed manifest: " + e.what());
  }

  const bool any_task_features = std::any_of(m.tasks.begin(), m.tasks.end(),
                                             [](const ManifestTask& t) { return !t.features_csv.empty(); });
  const bool all_task_features = !m.tasks.empty() &&
                                 std::all_of(m.tasks.begin(), m.tasks.end(),
                                             [](const ManifestTask& t) { return !t.features_csv.empty(); });
  if (m.shared_features_csv.has_value() == any_task_features) {
    throw ParseError(path.string() +
                     ": exactly one of shared_features_csv or per-task features_csv is required");
  }
  if (!m.shared_features_csv && !all_task_features) {
    throw ParseError(path.string() + ": every task needs features_csv");
  }
  if (m.shared_targets_csv && !m.shared_features_csv) {
    throw ParseError(path.string() + ": shared_targets_csv requires shared_features_csv");
  }
  if (!m.shared_targets_csv) {
    if (m.tasks.empty()) throw ParseError(path.string() + ": manifest lists no tasks");
    for (const ManifestTask& t : m.tasks) {
      if (t.targets_csv.empty()) {
        throw ParseError(path.string() + ": task '" + t.name + "' has no targets_csv");
      }
    }
  }
  return m;
}

MultitaskDataset load_dataset(const DatasetManifest& manifest) {
  std::vector<TaskData> raw;
  if (manifest.shared_features_csv) {
    const fs::path xpath = resolve(manifest, *manifest.shared_features_csv);
    const Matrix x = read_csv_matrix(xpath, manifest.has_header);
    Matrix y;
    if (manifest.shared_targets_csv) {
      const fs::path ypath = resolve(manifest, *manifest.shared_targets_csv);
      y = read_csv_matrix(ypath, manifest.has_header);
      if (y.rows() != x.rows()) {
        throw ParseError(ypath.string() + ": has " + std::to_string(y.rows()) +
                         " rows but features have " + std::to_string(x.rows()));
      }
      if (!manifest.tasks.empty() && static_cast<Index>(manifest.tasks.size()) != y.cols()) {
        throw ParseError(ypath.string() + ": has " + std::to_string(y.cols()) +
                         " columns but manifest lists " + std::to_string(manifest.tasks.size()) +
                         " tasks");
      }
    } else {
      y.resize(x.rows(), static_cast<Index>(manifest.tasks.size()));
      for (std::size_t i = 0; i < manifest.tasks.size(); ++i) {
        const fs::path ypath = resolve(manifest, manifest.tasks[i].targets_csv);
        const Matrix t = read_csv_matrix(ypath, manifest.has_header);
        if (t.cols() != 1 || t.rows() != x.rows()) {
          throw ParseError(ypath.string() + ": expected " + std::to_string(x.rows()) +
                           "x1 targets, got " + std::to_string(t.rows()) + "x" +
                           std::to_string(t.cols()));
        }
        y.col(static_cast<Index>(i)) = t.col(0);
      }
    }
    for (Index i = 0; i < y.cols(); ++i) raw.push_back({x, y.col(i)});
  } else {
    for (const ManifestTask& task : manifest.tasks) {
      const fs::path xpath = resolve(manifest, task.features_csv);
      const fs::path ypath = resolve(manifest, task.targets_csv);
      Matrix x = read_csv_matrix(xpath, manifest.has_header);
      const Matrix t = read_csv_matrix(ypath, manifest.has_header);
      if (t.cols() != 1 || t.rows() != x.rows()) {
        throw ParseError(ypath.string() + ": expected " + std::to_string(x.rows()) +
                         "x1 targets, got " + std::to_string(t.rows()) + "x" +
                         std::to_string(t.cols()));
      }
      raw.push_back({std::move(x), t.col(0)});
    }
  }
  MultitaskDataset data = validate_dataset(std::move(raw));
  if (manifest.d != 0 && manifest.d != data.dim()) {
    throw DimensionError("manifest declares d = " + std::to_string(manifest.d) +
                         " but features have " + std::to_string(data.dim()) + " columns");
  }
  return data;
}

MultitaskDataset load_manifest(const fs::path& path) { return load_dataset(parse_manifest(path)); }

void write_dataset(const MultitaskDataset& data, const fs::path& manifest_path) {
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  json j;
  j["format_version"] = 1;
  j["d"] = data.dim();
  j["tasks"] = json::array();
  if (data.shared_instances()) {
    const std::string xname = stem + ".features.csv";
    const std::string yname = stem + ".targets.csv";
    write_csv_matrix(dir / xname, data.shared_features());
    write_csv_matrix(dir / yname, data.shared_targets());
    j["shared_features_csv"] = xname;
    j["shared_targets_csv"] = yname;
    for (Index i = 0; i < data.num_tasks(); ++i) j["tasks"].push_back({{"name", "task" + std::to_string(i)}});
  } else {
    for (Index i = 0; i < data.num_tasks(); ++i) {
      const std::string xname = stem + ".task" + std::to_string(i) + ".features.csv";
      const std::string yname = stem + ".task" + std::to_string(i) + ".targets.csv";
      write_csv_matrix(dir / xname, data.features(i));
      write_csv_matrix(dir / yname, data.targets(i));
      j["tasks"].push_back(
          {{"name", "task" + std::to_string(i)}, {"features_csv", xname}, {"targets_csv", yname}});
    }
  }
  std::ofstream out = open_output(manifest_path);
  out << j.dump(2) << '\n';
  finish_output(out, manifest_path);
}

std::vector<Split> kfold_split(const MultitaskDataset& data, int k, std::uint64_t seed) {
  if (k < 2) throw SplitError("k-fold split needs k >= 2");
  for (Index i = 0; i < data.num_tasks(); ++i) {
    if (data.task_size(i) < k) {
      throw SplitError("task " + std::to_string(i) + " has " + std::to_string(data.task_size(i)) +
                       " instances, fewer than " + std::to_string(k) + " folds");
    }
  }
  std::mt19937_64 rng(seed);
  const Index groups = data.shared_instances() ? 1 : data.num_tasks();
  std::vector<std::vector<Index>> perms;
  for (Index g = 0; g < groups; ++g) perms.push_back(shuffled_rows(data.task_size(g), rng));

  std::vector<Split> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int fold = 0; fold < k; ++fold) {
    std::vector<std::pair<std::vector<Index>, std::vector<Index>>> rows;
    for (const auto& perm : perms) {
      const std::size_t n = perm.size();
      const std::size_t base = n / static_cast<std::size_t>(k);
      const std::size_t extra = n % static_cast<std::size_t>(k);
      const std::size_t f = static_cast<std::size_t>(fold);
      const std::size_t begin = f * base + std::min(f, extra);
      const std::size_t end = begin + base + (f < extra ? 1 : 0);
      rows.push_back(partition_rows(perm, begin, end));
    }
    out.push_back(split_by_rows(data, rows));
  }
  return out;
}

Split holdout_split(const MultitaskDataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw SplitError("holdout fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  const Index groups = data.shared_instances() ? 1 : data.num_tasks();
  std::vector<std::pair<std::vector<Index>, std::vector<Index>>> rows;
  for (Index g = 0; g < groups; ++g) {
    const std::vector<Index> perm = shuffled_rows(data.task_size(g), rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(perm.size())));
    if (n_train == 0 || n_train == perm.size()) {
      throw SplitError("holdout split leaves an empty side for task " + std::to_string(g));
    }
    // "selected" rows form the held-out side.
    rows.push_back(partition_rows(perm, n_train, perm.size()));
  }
  return split_by_rows(data, rows);
}

RffMap make_rff_map(Index d, Index p, double bandwidth, std::uint64_t seed, bool orthogonal) {
  if (d < 1) throw InvalidArgument("random features need d >= 1");
  if (p < 1 || p % 2 != 0) throw InvalidArgument("random feature count p must be a positive even number");
  if (!(bandwidth > 0.0)) throw InvalidArgument("bandwidth must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  RffMap map;
  map.omega.resize(d, p);
  if (!orthogonal) {
    for (Index j = 0; j < p; ++j) {
      for (Index i = 0; i < d; ++i) map.omega(i, j) = normal(rng);
    }
  } else {
    // Orthogonal blocks of d directions, norms redrawn from chi_d.
    for (Index start = 0; start < p; start += d) {
      Matrix g(d, d);
      for (Index j = 0; j < d; ++j) {
        for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
      }
      const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
      const Index width = std::min(d, p - start);
      for (Index j = 0; j < width; ++j) {
        double chi = 0.0;
        for (Index i = 0; i < d; ++i) {
          const double z = normal(rng);
          chi += z * z;
        }
        map.omega.col(start + j) = std::sqrt(chi) * q.col(j);
      }
    }
  }
  map.omega /= bandwidth;
  map.offset.resize(p);
  for (Index j = 0; j < p; ++j) map.offset(j) = phase(rng);
  return map;
}

Matrix apply_rff(const RffMap& map, const Matrix& x) {
  if (x.cols() != map.omega.rows()) throw DimensionError("random feature map expects " +
                                                         std::to_string(map.omega.rows()) + " inputs");
  const double scale = std::sqrt(2.0 / static_cast<double>(map.omega.cols()));
  Matrix z = x * map.omega;
  z.rowwise() += map.offset.transpose();
  return scale * z.array().cos().matrix();
}

MultitaskDataset apply_rff(const RffMap& map, const MultitaskDataset& data) {
  if (data.shared_instances()) {
    return MultitaskDataset::from_shared(apply_rff(map, data.shared_features()),
                                         data.shared_targets());
  }
  std::vector<TaskData> raw;
  for (Index i = 0; i < data.num_tasks(); ++i) {
    raw.push_back({apply_rff(map, data.features(i)), data.targets(i)});
  }
  return validate_dataset(std::move(raw));
}

MultitaskDataset rff_transform(const MultitaskDataset& data, Index p, double bandwidth,
                               std::uint64_t seed, bool orthogonal) {
  return apply_rff(make_rff_map(data.dim(), p, bandwidth, seed, orthogonal), data);
}

void write_trace_csv(const TrainReport& report, const fs::path& path) {
  std::ofstream out = open_output(path);
  out << "iteration,block,seconds,objective\n";
  for (const TracePoint& p : report.objective_trace) {
    out << p.iteration << ',' << to_string(p.block) << ',' << format_double(p.seconds) << ','
        << format_double(p.objective) << '\n';
  }
  finish_output(out, path);
}

std::vector<fs::path> write_report(const TrainReport& report, const FetrModel& model,
                                   const std::string& path_prefix, const ReportExtras& extras) {
  const fs::path json_path = path_prefix + ".report.json";
  const fs::path trace_path = path_prefix + ".trace.csv";
  const fs::path s1_path = path_prefix + ".sigma1.csv";
  const fs::path s2_path = path_prefix + ".sigma2.csv";
  const fs::path w_path = path_prefix + ".weights.csv";

  json j;
  j["config"] = config_to_json(model.config);
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["stop_reason"] = report.stop_reason;
  j["objective_evaluations"] = report.objective_evaluations;
  j["final_objective"] = report.final_objective();
  j["block_seconds"] = {{"w", report.per_block_seconds.w},
                        {"sigma1", report.per_block_seconds.sigma1},
                        {"sigma2", report.per_block_seconds.sigma2}};
  j["d"] = model.weights.dim();
  j["m"] = model.weights.num_tasks();
  if (!extras.dataset.empty()) j["dataset"] = extras.dataset;
  if (extras.train_metric) {
    j["metrics"] = {{extras.metric_name.empty() ? "metric" : extras.metric_name,
                     metric_to_json(*extras.train_metric)}};
  }

  std::ofstream out = open_output(json_path);
  out << j.dump(2) << '\n';
  finish_output(out, json_path);
  write_trace_csv(report, trace_path);
  write_csv_matrix(s1_path, model.covariances.sigma1());
  write_csv_matrix(s2_path, model.covariances.sigma2());
  write_csv_matrix(w_path, model.weights.matrix());
  return {json_path, trace_path, s1_path, s2_path, w_path};
}

json config_to_json(const FetrConfig& c) {
  json j{{"eta", c.eta},
         {"l", c.lower},
         {"u", c.upper},
         {"w_solver", to_string(c.w_solver)},
         {"max_outer_iters", c.max_outer_iters},
         {"rel_obj_tol", c.rel_obj_tol},
         {"gd_max_iters", c.gd_max_iters},
         {"gd_rel_tol", c.gd_rel_tol},
         {"seed", c.seed},
         {"closed_form_guard", c.closed_form_guard}};
  if (std::isfinite(c.time_budget_seconds)) j["time_budget_seconds"] = c.time_budget_seconds;
  return j;
}

FetrConfig config_from_json(const json& j, FetrConfig base) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "eta") base.eta = value.get<double>();
      else if (key == "l") base.lower = value.get<double>();
      else if (key == "u") base.upper = value.get<double>();
      else if (key == "w_solver") base.w_solver = parse_w_solver(value.get<std::string>());
      else if (key == "max_outer_iters") base.max_outer_iters = value.get<int>();
      else if (key == "rel_obj_tol") base.rel_obj_tol = value.get<double>();
      else if (key == "gd_max_iters") base.gd_max_iters = value.get<int>();
      else if (key == "gd_rel_tol") base.gd_rel_tol = value.get<double>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "closed_form_guard") base.closed_form_guard = value.get<Index>();
      else if (key == "time_budget_seconds") base.time_budget_seconds = value.get<double>();
      else throw InvalidArgument("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
  return base;
}

json metric_to_json(const MetricResult& metric) {
  return {{"per_task", metric.per_task}, {"aggregate", metric.aggregate}};
}

}  // namespace fetr::io
