#pragma once

#include <string>
#include <vector>

namespace fetr::cli {

/// Exit codes: 0 success, 2 argument error, 3 data error, 4 solver error.
int run_cli(int argc, const char* const* argv);

/// Convenience overload; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

/// Decade grid from "a..b" (10^round(log10 a) .. 10^round(log10 b)) or an explicit comma list.
std::vector<double> parse_eta_grid(const std::string& text);

}  // namespace fetr::cli
