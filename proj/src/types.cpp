#include "fetr/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fetr/errors.hpp"

namespace fetr {

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

void check_spectrum(const Matrix& s, const char* name, double lower, double upper) {
  if (!s.allFinite()) throw NumericError(std::string(name) + " has non-finite entries");
  const double scale = std::max(1.0, s.norm());
  if ((s - s.transpose()).norm() > CovariancePair::kSymmetryTolerance * scale) {
    throw DomainError(std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
  const Vector& values = eig.eigenvalues();
  if (values.size() == 0) return;
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (lo < lower - CovariancePair::kSpectrumTolerance ||
      hi > upper + CovariancePair::kSpectrumTolerance) {
    std::ostringstream msg;
    msg << name << " spectrum [" << lo << ", " << hi << "] leaves [" << lower << ", " << upper
        << "]";
    throw DomainError(msg.str());
  }
}

}  // namespace

MultitaskDataset validate_dataset(std::vector<TaskData> raw) {
  if (raw.empty()) throw EmptyDataError("dataset has no tasks");
  const Index d = raw.front().features.cols();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const TaskData& t = raw[i];
    if (t.features.rows() == 0 || t.targets.size() == 0) {
      throw EmptyDataError("task " + std::to_string(i) + " has no instances");
    }
    if (t.features.cols() != d) {
      throw DimensionError("task " + std::to_string(i) + " has " +
                           std::to_string(t.features.cols()) + " features, expected " +
                           std::to_string(d));
    }
    if (t.features.rows() != t.targets.size()) {
      throw DimensionError("task " + std::to_string(i) + " has " +
                           std::to_string(t.features.rows()) + " rows but " +
                           std::to_string(t.targets.size()) + " targets");
    }
  }
  if (d == 0) throw DimensionError("feature dimension is zero");

  bool shared = true;
  for (std::size_t i = 1; i < raw.size() && shared; ++i) {
    shared = bitwise_equal(raw[i].features, raw.front().features);
  }

  MultitaskDataset out;
  out.dim_ = d;
  out.num_tasks_ = static_cast<Index>(raw.size());
  out.shared_ = shared;
  if (shared) {
    const Index n = raw.front().features.rows();
    out.shared_x_ = std::move(raw.front().features);
    out.shared_y_.resize(n, out.num_tasks_);
    for (Index i = 0; i < out.num_tasks_; ++i) out.shared_y_.col(i) = raw[i].targets;
  } else {
    out.per_task_ = std::move(raw);
  }
  return out;
}

MultitaskDataset MultitaskDataset::from_shared(Matrix features, Matrix targets) {
  if (features.rows() != targets.rows()) {
    throw DimensionError("features have " + std::to_string(features.rows()) +
                         " rows but targets have " + std::to_string(targets.rows()));
  }
  if (targets.cols() == 0) throw EmptyDataError("dataset has no tasks");
  if (features.rows() == 0) throw EmptyDataError("dataset has no instances");
  if (features.cols() == 0) throw DimensionError("feature dimension is zero");
  MultitaskDataset out;
  out.dim_ = features.cols();
  out.num_tasks_ = targets.cols();
  out.shared_ = true;
  out.shared_x_ = std::move(features);
  out.shared_y_ = std::move(targets);
  return out;
}

Index MultitaskDataset::task_size(Index task) const {
  return shared_ ? shared_x_.rows() : per_task_.at(static_cast<std::size_t>(task)).features.rows();
}

Index MultitaskDataset::total_instances() const {
  Index total = 0;
  for (Index i = 0; i < num_tasks_; ++i) total += task_size(i);
  return total;
}

const Matrix& MultitaskDataset::features(Index task) const {
  if (task < 0 || task >= num_tasks_) throw DimensionError("task index out of range");
  return shared_ ? shared_x_ : per_task_[static_cast<std::size_t>(task)].features;
}

Vector MultitaskDataset::targets(Index task) const {
  if (task < 0 || task >= num_tasks_) throw DimensionError("task index out of range");
  return shared_ ? Vector(shared_y_.col(task)) : per_task_[static_cast<std::size_t>(task)].targets;
}

const Matrix& MultitaskDataset::shared_features() const {
  if (!shared_) throw UnsupportedShapeError("dataset does not share instances across tasks");
  return shared_x_;
}

const Matrix& MultitaskDataset::shared_targets() const {
  if (!shared_) throw UnsupportedShapeError("dataset does not share instances across tasks");
  return shared_y_;
}

std::vector<TaskData> MultitaskDataset::tasks() const {
  if (!shared_) return per_task_;
  std::vector<TaskData> out;
  out.reserve(static_cast<std::size_t>(num_tasks_));
  for (Index i = 0; i < num_tasks_; ++i) out.push_back({shared_x_, shared_y_.col(i)});
  return out;
}

bool operator==(const MultitaskDataset& a, const MultitaskDataset& b) {
  if (a.dim_ != b.dim_ || a.num_tasks_ != b.num_tasks_ || a.shared_ != b.shared_) return false;
  if (a.shared_) {
    return bitwise_equal(a.shared_x_, b.shared_x_) && bitwise_equal(a.shared_y_, b.shared_y_);
  }
  for (std::size_t i = 0; i < a.per_task_.size(); ++i) {
    if (!bitwise_equal(a.per_task_[i].features, b.per_task_[i].features) ||
        !bitwise_equal(a.per_task_[i].targets, b.per_task_[i].targets)) {
      return false;
    }
  }
  return true;
}

WeightMatrix::WeightMatrix(Matrix w) : w_(std::move(w)) {
  if (!w_.allFinite()) throw NumericError("weight matrix has non-finite entries");
}

CovariancePair::CovariancePair(Matrix sigma1, Matrix sigma2, double lower, double upper)
    : lower_(lower), upper_(upper) {
  if (!(lower > 0.0) || !(upper > lower)) {
    throw InvalidArgument("spectrum bounds must satisfy 0 < l < u");
  }
  if (sigma1.rows() != sigma1.cols() || sigma2.rows() != sigma2.cols()) {
    throw DimensionError("covariance matrices must be square");
  }
  check_spectrum(sigma1, "sigma1", lower, upper);
  check_spectrum(sigma2, "sigma2", lower, upper);
  sigma1_ = 0.5 * (sigma1 + sigma1.transpose());
  sigma2_ = 0.5 * (sigma2 + sigma2.transpose());
}

CovariancePair CovariancePair::scaled_identity(Index d, Index m, double lower, double upper) {
  const double c = std::clamp(1.0, lower, upper);
  return CovariancePair(c * Matrix::Identity(d, d), c * Matrix::Identity(m, m), lower, upper);
}

const char* to_string(WSolverKind kind) {
  switch (kind) {
    case WSolverKind::ClosedForm:
      return "closed";
    case WSolverKind::GradientDescent:
      return "gd";
    case WSolverKind::Sylvester:
      return "sylvester";
    case WSolverKind::Auto:
      return "auto";
  }
  return "unknown";
}

WSolverKind parse_w_solver(const std::string& name) {
  if (name == "closed") return WSolverKind::ClosedForm;
  if (name == "gd") return WSolverKind::GradientDescent;
  if (name == "sylvester") return WSolverKind::Sylvester;
  if (name == "auto") return WSolverKind::Auto;
  throw InvalidArgument("unknown W solver '" + name + "'");
}

void FetrConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be positive");
  if (!(lower > 0.0) || !(upper > lower) || !std::isfinite(upper)) {
    throw InvalidArgument("spectrum bounds must satisfy 0 < l < u");
  }
  if (!(rel_obj_tol > 0.0) || !(gd_rel_tol > 0.0)) {
    throw InvalidArgument("tolerances must be positive");
  }
  if (max_outer_iters < 1 || gd_max_iters < 1) {
    throw InvalidArgument("iteration limits must be positive");
  }
  if (closed_form_guard < 1) throw InvalidArgument("closed-form guard must be positive");
  if (!(time_budget_seconds > 0.0)) throw InvalidArgument("time budget must be positive");
}

const char* to_string(Block block) {
  switch (block) {
    case Block::Init:
      return "init";
    case Block::W:
      return "w";
    case Block::Sigma1:
      return "sigma1";
    case Block::Sigma2:
      return "sigma2";
    case Block::Joint:
      return "joint";
  }
  return "unknown";
}

double TrainReport::final_objective() const {
  if (objective_trace.empty()) return std::numeric_limits<double>::quiet_NaN();
  return objective_trace.back().objective;
}

}  // namespace fetr
