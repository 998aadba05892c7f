#include "gridstate/profile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "gridstate/error.hpp"
#include "gridstate/manifest.hpp"
#include "gridstate/rng.hpp"
#include "json_io.hpp"

namespace gridstate {

namespace {

void normalize(std::vector<double>& values) {
  const double peak = *std::max_element(values.begin(), values.end());
  for (double& v : values) v /= peak;
}

}  // namespace

LoadProfile synth_profile(std::size_t hours, std::uint64_t seed, const ProfileParams& p) {
  if (hours < 48) throw Error("synthetic profile needs at least 48 hours");
  if (!(p.floor > 0.0)) throw Error("profile floor must be positive");
  Rng rng(derive_seed(seed, "profile"));
  LoadProfile out;
  out.values.resize(hours);
  for (std::size_t t = 0; t < hours; ++t) {
    const double h = static_cast<double>(t);
    // daily peak near 18:00, weekly trough at the weekend
    const double daily = std::sin(2.0 * std::numbers::pi * (h - 12.0) / 24.0);
    const double weekly = std::cos(2.0 * std::numbers::pi * h / 168.0);
    const double noise = p.noise > 0.0 ? p.noise * rng.normal() : 0.0;
    out.values[t] = std::max(p.floor, p.base + p.daily_amplitude * daily + p.weekly_amplitude * weekly + noise);
  }
  normalize(out.values);
  out.provenance = "synthetic hours=" + std::to_string(hours) + " seed=" + std::to_string(seed) +
                   " base=" + format_double(p.base) + " daily=" + format_double(p.daily_amplitude) +
                   " weekly=" + format_double(p.weekly_amplitude) + " noise=" + format_double(p.noise) +
                   " floor=" + format_double(p.floor);
  return out;
}

LoadProfile import_profile(std::string_view text, std::string_view source) {
  LoadProfile out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size()) {
      throw Error(std::string(source) + ": line " + std::to_string(line_no) + ": not a number: \"" +
                  std::string(line) + "\"");
    }
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(std::string(source) + ": line " + std::to_string(line_no) + ": value must be positive");
    }
    out.values.push_back(v);
    if (end == text.size()) break;
  }
  if (out.values.empty()) throw Error(std::string(source) + ": profile is empty");
  normalize(out.values);
  out.provenance = "import sha256=" + sha256_hex(text);
  return out;
}

LoadProfile load_profile(const std::filesystem::path& path) {
  return import_profile(detail::read_text_file(path), path.string());
}

std::string profile_to_csv(const LoadProfile& profile) {
  std::string out;
  out.reserve(profile.values.size() * 20);
  for (double v : profile.values) {
    out += format_double(v);
    out += '\n';
  }
  return out;
}

}  // namespace gridstate
