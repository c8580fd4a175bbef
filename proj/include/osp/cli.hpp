#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace osp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `osp` command line tool. `args` excludes the program
/// name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Expands a grid such as `0,0.2,...,1.0` or `0.1,0.5,0.9`.
std::vector<double> parse_grid(const std::string& text);

} // namespace osp
