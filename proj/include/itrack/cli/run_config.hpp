#pragma once

#include <stdexcept>
#include <string>

#include "itrack/iit/train.hpp"

namespace itrack::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a command needs, from one JSON file. The seed is mandatory;
/// every other field falls back to its default. train.world and train.net
/// are kept consistent with the top-level sections.
struct RunConfig {
  uint64_t seed = 1;
  sim::WorldConfig world;
  net::NetConfig net;
  iit::TrainConfig train;
};

/// Throws ConfigError naming the offending field on type errors, unknown
/// keys, or a missing seed.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

}  // namespace itrack::cli
