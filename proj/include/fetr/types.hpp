#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fetr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// One task's training data before validation.
struct TaskData {
  Matrix features;  // n_i x d
  Vector targets;   // n_i
};

/// Per-task design matrices and targets.
///
/// When every task observes the same design matrix the dataset is flagged as
/// shared and stores X once together with an n x m target matrix Y. Otherwise
/// each task keeps its own (X_i, y_i).
class MultitaskDataset {
 public:
  /// Builds a shared-instance dataset directly from X (n x d) and Y (n x m).
  static MultitaskDataset from_shared(Matrix features, Matrix targets);

  Index dim() const { return dim_; }
  Index num_tasks() const { return num_tasks_; }
  bool shared_instances() const { return shared_; }

  /// Number of instances observed by task i.
  Index task_size(Index task) const;
  Index total_instances() const;

  /// X_i. For shared data every task returns the same matrix.
  const Matrix& features(Index task) const;
  /// y_i as a copy (a column of Y for shared data).
  Vector targets(Index task) const;

  /// Shared X and Y; throw UnsupportedShapeError on per-task data.
  const Matrix& shared_features() const;
  const Matrix& shared_targets() const;

  /// The raw task list this dataset was validated from.
  std::vector<TaskData> tasks() const;

  friend bool operator==(const MultitaskDataset& a, const MultitaskDataset& b);

 private:
  friend MultitaskDataset validate_dataset(std::vector<TaskData> raw);

  MultitaskDataset() = default;

  Index dim_ = 0;
  Index num_tasks_ = 0;
  bool shared_ = false;
  Matrix shared_x_;
  Matrix shared_y_;
  std::vector<TaskData> per_task_;
};

/// Validates a raw task list. Sharing is detected by bitwise equality of all X_i.
/// Throws EmptyDataError when no tasks or an empty task is given and
/// DimensionError on inconsistent shapes.
MultitaskDataset validate_dataset(std::vector<TaskData> raw);

/// The d x m parameter matrix; column i is task i's weight vector.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  explicit WeightMatrix(Matrix w);

  const Matrix& matrix() const { return w_; }
  Index dim() const { return w_.rows(); }
  Index num_tasks() const { return w_.cols(); }

 private:
  Matrix w_;
};

/// Feature (d x d) and task (m x m) precision matrices with spectra in [l, u].
class CovariancePair {
 public:
  static constexpr double kSymmetryTolerance = 1e-12;
  static constexpr double kSpectrumTolerance = 1e-9;

  CovariancePair(Matrix sigma1, Matrix sigma2, double lower, double upper);

  /// Both matrices set to clamp(1, l, u) times the identity.
  static CovariancePair scaled_identity(Index d, Index m, double lower, double upper);

  const Matrix& sigma1() const { return sigma1_; }
  const Matrix& sigma2() const { return sigma2_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }

 private:
  Matrix sigma1_;
  Matrix sigma2_;
  double lower_;
  double upper_;
};

enum class WSolverKind { ClosedForm, GradientDescent, Sylvester, Auto };

const char* to_string(WSolverKind kind);
WSolverKind parse_w_solver(const std::string& name);

struct FetrConfig {
  double eta = 1.0;
  double lower = 1e-3;
  double upper = 1e3;
  WSolverKind w_solver = WSolverKind::Auto;
  int max_outer_iters = 100;
  double rel_obj_tol = 1e-8;
  int gd_max_iters = 100000;
  double gd_rel_tol = 1e-10;
  std::uint64_t seed = 0;
  // Largest md for which the md x md closed-form system is assembled.
  Index closed_form_guard = 4000;
  // Wall-clock limit for iterative fits; infinity means unlimited.
  double time_budget_seconds = std::numeric_limits<double>::infinity();

  /// Throws InvalidArgument if any field is out of range.
  void validate() const;
};

/// Orthonormal eigenvectors (columns) with eigenvalues in ascending order.
struct EigenDecomp {
  Matrix vectors;
  Vector values;
};

enum class Block { Init, W, Sigma1, Sigma2, Joint };

const char* to_string(Block block);

struct TracePoint {
  int iteration = 0;
  Block block = Block::Init;
  double seconds = 0.0;
  double objective = 0.0;
  // Cumulative number of objective evaluations when this point was recorded.
  long evaluations = 0;
};

struct BlockSeconds {
  double w = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

struct TrainReport {
  std::vector<TracePoint> objective_trace;
  bool converged = false;
  int iterations = 0;
  BlockSeconds per_block_seconds;
  long objective_evaluations = 0;
  // One of "converged", "max_iters", "budget", "singular", "stalled".
  std::string stop_reason;

  double final_objective() const;
};

}  // namespace fetr
