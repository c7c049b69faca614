#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hjbppo/trainer.hpp"

namespace hjbppo::config {

// Fully resolved run description. Built from a key-value config file plus
// flag overrides; every hyperparameter defaults to the standard table values
// so an empty config (plus an environment name) trains with defaults.
struct RunConfig {
  train::TrainerConfig trainer;
  std::vector<std::uint64_t> compare_seeds;  // used by the compare command
};

using KeyValue = std::pair<std::string, std::string>;

// Parses `key = value` lines; '#' starts a comment; blank lines are skipped.
// Throws ConfigError listing every malformed line.
std::vector<KeyValue> parse_config_file(const std::filesystem::path& path);
std::vector<KeyValue> parse_config_text(const std::string& text,
                                        const std::string& source_name);

struct BuildResult {
  RunConfig config;
  std::vector<std::string> warnings;
};

// Applies file entries then overrides (later wins), validates everything and
// collects ALL problems — unknown keys, unparsable values, out-of-range
// settings, missing required fields — into a single ConfigError.
BuildResult build_config(std::span<const KeyValue> file_entries,
                         std::span<const KeyValue> overrides);

// Canonical snapshot of a resolved config: sorted `key = value` lines with
// exact round-trip number formatting. Feeding the text back through
// parse_config_text + build_config reproduces the identical RunConfig, which
// is what makes runs bit-reproducible from their snapshot.
std::string serialize_config(const RunConfig& config);

// Per-environment default residual weight, applied when trainer.lambda_hjb
// is not given explicitly.
double default_lambda_for(const std::string& env_name);

}  // namespace hjbppo::config
