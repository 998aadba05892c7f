#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridstate {

std::string toolkit_version();

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Everything needed to reproduce a run. The hash covers the version, the
/// configuration hash and the seeds; wall-clock timings are excluded so it
/// is stable across reruns.
struct RunManifest {
  std::string version = toolkit_version();
  std::string config_hash;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;  // name -> content hash
  std::vector<std::pair<std::string, double>> timings;      // stage -> seconds

  std::string hash() const;
  std::string to_json() const;
};

}  // namespace gridstate
