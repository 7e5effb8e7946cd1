#include "su11/manifest.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace su11 {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

RunManifest::RunManifest(std::string command, std::uint64_t seed, std::string config_json)
    : command_(std::move(command)), seed_(seed), config_json_(std::move(config_json)) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  timestamp_ = os.str();
}

void RunManifest::add_output(const std::string& path) { outputs_.emplace_back(path, sha256_file(path)); }

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command_;
  j["seed"] = seed_;
  j["config"] = nlohmann::json::parse(config_json_);
  j["config_sha256"] = sha256_hex(config_json_);
  j["timestamp"] = timestamp_;
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& [p, h] : outputs_) {
    outs.push_back({{"path", std::filesystem::path(p).filename().string()}, {"sha256", h}});
  }
  j["outputs"] = outs;
  if (!extra_.empty()) j["results"] = extra_;
  return j;
}

bool RunManifest::verify() const {
  for (const auto& [p, h] : outputs_) {
    if (!std::filesystem::exists(p) || sha256_file(p) != h) return false;
  }
  return true;
}

void RunManifest::write(const std::string& path) const { atomic_write(path, to_json().dump(2) + "\n"); }

}  // namespace su11
