#include "gridstate/manifest.hpp"

#include <array>
#include <charconv>

#include <openssl/evp.h>

#include "gridstate/error.hpp"
#include "json_io.hpp"

namespace gridstate {

using detail::json;

std::string toolkit_version() { return GRIDSTATE_VERSION; }

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return {buf.data(), res.ptr};
}

namespace {

json identity_json(const RunManifest& m) {
  json seeds = json::object();
  for (const auto& [name, seed] : m.seeds) seeds[name] = std::to_string(seed);
  json inputs = json::object();
  for (const auto& [name, hash] : m.inputs) inputs[name] = hash;
  return {{"version", m.version}, {"config_hash", m.config_hash}, {"seeds", seeds}, {"inputs", inputs}};
}

}  // namespace

std::string RunManifest::hash() const { return sha256_hex(identity_json(*this).dump()); }

std::string RunManifest::to_json() const {
  json doc = identity_json(*this);
  doc["format"] = "gridstate-manifest";
  doc["hash"] = hash();
  json t = json::object();
  for (const auto& [stage, seconds] : timings) t[stage] = seconds;
  doc["timings_seconds"] = t;
  return detail::dump(doc);
}

}  // namespace gridstate
