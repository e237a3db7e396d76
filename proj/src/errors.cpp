#include "fetr/errors.hpp"

namespace fetr {

const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Argument:
      return "argument";
    case ErrorCategory::Data:
      return "data";
    case ErrorCategory::Solver:
      return "solver";
  }
  return "unknown";
}

}  // namespace fetr
