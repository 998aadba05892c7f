#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gridstate {

struct ProfileParams {
  double base = 1.0;
  double daily_amplitude = 0.25;   // 24 h period
  double weekly_amplitude = 0.10;  // 168 h period
  double noise = 0.03;             // standard deviation of the additive noise
  double floor = 0.2;              // values are clipped from below before normalizing
};

/// Hourly load multipliers, normalized so the peak is exactly 1.
struct LoadProfile {
  std::vector<double> values;
  std::string provenance;

  std::size_t size() const noexcept { return values.size(); }
};

/// base + daily and weekly sinusoids + seeded Gaussian noise, clipped at
/// `floor`, divided by its maximum. Throws Error if hours < 48.
LoadProfile synth_profile(std::size_t hours, std::uint64_t seed, const ProfileParams& params = {});

/// One positive number per line; blank lines and lines starting with '#'
/// are skipped. Errors name the offending line.
LoadProfile import_profile(std::string_view text, std::string_view source = "profile");
LoadProfile load_profile(const std::filesystem::path& path);

/// One value per line, shortest round-trip formatting.
std::string profile_to_csv(const LoadProfile& profile);

}  // namespace gridstate
