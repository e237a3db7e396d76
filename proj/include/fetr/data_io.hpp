#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fetr/trainer.hpp"
#include "fetr/types.hpp"

namespace fetr::io {

/// Shared X ~ U[0,1]^{n x d}, Y = X W0 + 0.01 N(0,1) with W0 ~ N(0,1)^{d x m}.
MultitaskDataset generate_synthetic(Index n, Index d, Index m, std::uint64_t seed);

/// Random symmetric matrix with eigenvalues log-uniform in [l, u] and a
/// Haar-like random eigenbasis; used by benchmarks.
Matrix random_bounded_spd(Index k, double lower, double upper, std::uint64_t seed);

/// Reads a numeric CSV (comma separated, one instance per row). Throws
/// ParseError with file:line context on ragged rows or non-numeric cells.
Matrix read_csv_matrix(const std::filesystem::path& path, bool has_header = false);

/// Writes a matrix row-major with 17 significant digits and LF endings.
void write_csv_matrix(const std::filesystem::path& path, const Matrix& m);

struct ManifestTask {
  std::string name;
  std::string features_csv;  // empty when features are shared
  std::string targets_csv;   // empty when targets come from shared_targets_csv
};

/// JSON manifest, format_version 1. Relative paths resolve against the
/// manifest's directory.
struct DatasetManifest {
  int format_version = 1;
  Index d = 0;
  bool has_header = false;
  std::optional<std::string> shared_features_csv;
  std::optional<std::string> shared_targets_csv;
  std::vector<ManifestTask> tasks;
  std::filesystem::path base_dir;
};

DatasetManifest parse_manifest(const std::filesystem::path& path);
MultitaskDataset load_dataset(const DatasetManifest& manifest);
MultitaskDataset load_manifest(const std::filesystem::path& path);

/// Writes a dataset as CSVs plus a manifest at `manifest_path`.
void write_dataset(const MultitaskDataset& data, const std::filesystem::path& manifest_path);

struct Split {
  MultitaskDataset train;
  MultitaskDataset test;
};

/// k near-equal folds per task after a seeded shuffle. Shared datasets use
/// one row permutation for every task so both sides stay shared.
std::vector<Split> kfold_split(const MultitaskDataset& data, int k, std::uint64_t seed);

/// Seeded holdout split: the first round(train_fraction * n_i) shuffled rows train.
Split holdout_split(const MultitaskDataset& data, double train_fraction, std::uint64_t seed);

/// Random Fourier feature map z(x) = sqrt(2/p) cos(Omega^T x + b).
struct RffMap {
  Matrix omega;  // d x p
  Vector offset; // p
};

RffMap make_rff_map(Index d, Index p, double bandwidth, std::uint64_t seed, bool orthogonal);
Matrix apply_rff(const RffMap& map, const Matrix& x);
MultitaskDataset apply_rff(const RffMap& map, const MultitaskDataset& data);

/// Draws a map with make_rff_map and applies it to every task.
MultitaskDataset rff_transform(const MultitaskDataset& data, Index p, double bandwidth,
                               std::uint64_t seed, bool orthogonal);

/// Optional extra fields for the report JSON.
struct ReportExtras {
  std::optional<MetricResult> train_metric;
  std::string metric_name;
  std::string dataset;
};

/// Writes <prefix>.report.json, .trace.csv, .sigma1.csv, .sigma2.csv and .weights.csv.
/// Returns the paths written.
std::vector<std::filesystem::path> write_report(const TrainReport& report, const FetrModel& model,
                                                const std::string& path_prefix,
                                                const ReportExtras& extras = {});

/// Writes only the trace CSV.
void write_trace_csv(const TrainReport& report, const std::filesystem::path& path);

}  // namespace fetr::io
