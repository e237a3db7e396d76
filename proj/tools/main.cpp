#include "cli.hpp"

int main(int argc, char** argv) { return fetr::cli::run_cli(argc, argv); }
