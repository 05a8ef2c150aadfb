#pragma once

// Plain-text run configuration: one "key = value" per line, '#' starts a
// comment. Every key has a default; unknown keys and malformed values are
// rejected with the offending line number.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvos/analysis.hpp"
#include "cvos/cyclictrain.hpp"
#include "cvos/dataio.hpp"
#include "cvos/gradcorrect.hpp"
#include "cvos/robustness.hpp"
#include "cvos/segnet.hpp"

namespace cvos {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 112;
  int n_val = 4;  // trailing synthetic videos held out for validation
  int workers = 1;
  SegHyper hyper;
  TrainConfig train;
  LossConfig loss;
  CorrectionConfig correction;
  InferenceConfig inference;
  ErfConfig erf;
  AttackConfig attack;
  SynthConfig synth;

  // Copies shared knobs (seed, resolution, lambda, loss) into the module configs.
  void sync();
  void validate() const;
};

// Names of every accepted key, in snapshot order.
const std::vector<std::string>& config_keys();

// Sets one key from its textual value. Throws ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig parse_config(const std::filesystem::path& path);
// Applies a file on top of an existing configuration.
void merge_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Complete "key = value" listing that parses back to the same configuration.
std::string serialize_config(const RunConfig& cfg);
// Hex FNV-1a digest of serialize_config().
std::string config_hash(const RunConfig& cfg);

}  // namespace cvos
