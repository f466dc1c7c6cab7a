#pragma once

namespace spherecal {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitSolver = 3;

// Environment variable that replaces the --out directory of every command.
inline constexpr const char* kOutputDirEnv = "SPHERECAL_OUTPUT_DIR";

// Entry point of the `spherecal` tool: simulate, calibrate, assess, report.
int run_cli(int argc, const char* const* argv);

}  // namespace spherecal
