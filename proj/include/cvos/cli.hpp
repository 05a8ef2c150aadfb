#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cvos {

// Exit codes of cli_dispatch.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// run.json in every output directory. Written with status "running" before
// the command starts and rewritten with the final status afterwards.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_snapshot;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::vector<std::string> outputs;  // relative to the output directory
  std::string status = "running";
  std::string error;
  double wall_seconds = 0.0;

  void write(const std::filesystem::path& dir) const;
};

std::string version_stamp();

// args excludes the program name. Messages go to `out` / `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace cvos
