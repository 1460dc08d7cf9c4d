#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace esb {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_invalid = 2,
  exit_io = 3,
  exit_infeasible = 4,
  exit_incomplete = 5,
};

// Entry point shared by the executable and the tests. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace esb
