#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>

#include "attnlab/tuner.hpp"

namespace attnlab::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kMissingFile = 2,
  kNonFiniteLoss = 3,
  kCorruptLedger = 4,
  kVocabularyMismatch = 5,
};

// Flat `key = value` settings; `#` starts a comment line.
using Settings = std::map<std::string, std::string>;

Settings parse_settings(std::istream& in);
Settings load_settings(const std::filesystem::path& path);
void write_settings(const std::filesystem::path& path, const Settings& settings);

// Grid file keys: dc (or d_c), k, q, eta, seeds, top_m. Lists are
// comma-separated; absent keys keep the defaults.
GridSpec grid_from_settings(const Settings& settings);

// Runs `attnlab <command> [flags]`; `args` excludes the program name.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace attnlab::cli
