#pragma once

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ionkerr/errors.hpp"
#include "ionkerr/version.hpp"
#include "json.hpp"

namespace ionkerr::cli {

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed for '" + path + "'");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Numbers stay numbers in the manifest; anything else is kept verbatim.
inline nlohmann::ordered_json typed_value(const std::string& text) {
  const char* end = text.data() + text.size();
  long long i = 0;
  const auto ri = std::from_chars(text.data(), end, i);
  if (!text.empty() && ri.ec == std::errc() && ri.ptr == end) return i;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), end, v);
  if (!text.empty() && res.ec == std::errc() && res.ptr == end) return v;
  return text;
}

/// Every option of the subcommand with the value it resolved to.
inline nlohmann::ordered_json resolved_options(const CLI::App& sub) {
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "stamp") continue;
    if (opt->get_expected_max() == 0) {
      cfg[name] = opt->count() > 0;
      continue;
    }
    std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (values.empty() && !opt->get_default_str().empty()) values.push_back(opt->get_default_str());
    if (values.empty()) {
      cfg[name] = nullptr;
    } else if (values.size() == 1 && opt->get_expected_max() <= 1) {
      cfg[name] = typed_value(values.front());
    } else {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& v : values) arr.push_back(typed_value(v));
      cfg[name] = arr;
    }
  }
  return cfg;
}

struct ManifestInputs {
  std::vector<std::string> files;
  bool has_seed = false;
  unsigned long long seed = 0;
  bool stamp = false;
};

/// Identical invocations give identical manifests; the wall-clock timestamp
/// is only added on request.
inline nlohmann::ordered_json make_manifest(const CLI::App& sub, const ManifestInputs& in) {
  nlohmann::ordered_json m;
  m["tool"] = "ionkerr";
  m["version"] = kVersion;
  m["command"] = sub.get_name();
  m["configuration"] = resolved_options(sub);
  m["seed"] = in.has_seed ? nlohmann::ordered_json(in.seed) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json hashes = nlohmann::ordered_json::object();
  for (const auto& f : in.files) hashes[f] = "sha256:" + sha256_file(f);
  m["input_hashes"] = hashes;
  if (in.stamp) m["timestamp_utc"] = utc_timestamp();
  return m;
}

}  // namespace ionkerr::cli
