#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace rebal::cli {

/// Hex SHA-256 of a file's bytes. Throws IoError when unreadable.
std::string sha256_file(const std::string& path);

/// Run record written next to every output: the canonical argument list
/// (seed made explicit) replays the run.
struct Manifest {
  std::string subcommand;
  std::vector<std::string> argv;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json result = nlohmann::ordered_json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  unsigned long long seed = 0;
  double wall_time = 0.0;

  nlohmann::ordered_json to_json() const;
  void write(const std::string& path) const;
};

nlohmann::ordered_json read_manifest(const std::string& path);

}  // namespace rebal::cli
