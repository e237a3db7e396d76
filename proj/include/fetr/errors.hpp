#pragma once

#include <stdexcept>
#include <string>

namespace fetr {

/// Coarse classification used by the command-line front end to pick an exit code.
enum class ErrorCategory { Argument, Data, Solver };

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define FETR_DECLARE_ERROR(Name, Category)                                   \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorCategory::Category, what) {} \
  };

FETR_DECLARE_ERROR(InvalidArgument, Argument)

FETR_DECLARE_ERROR(DimensionError, Data)
FETR_DECLARE_ERROR(EmptyDataError, Data)
FETR_DECLARE_ERROR(ParseError, Data)
FETR_DECLARE_ERROR(SplitError, Data)
FETR_DECLARE_ERROR(IoError, Data)
FETR_DECLARE_ERROR(MetricError, Data)

FETR_DECLARE_ERROR(NumericError, Solver)
FETR_DECLARE_ERROR(DomainError, Solver)
FETR_DECLARE_ERROR(SolverError, Solver)
FETR_DECLARE_ERROR(CapacityError, Solver)
FETR_DECLARE_ERROR(UnsupportedShapeError, Solver)
FETR_DECLARE_ERROR(DivergenceError, Solver)
// Raised when an invariant that the algorithms guarantee is observed to fail.
FETR_DECLARE_ERROR(ConsistencyError, Solver)

#undef FETR_DECLARE_ERROR

const char* to_string(ErrorCategory category);

}  // namespace fetr
