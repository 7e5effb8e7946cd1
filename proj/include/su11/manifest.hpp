#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace su11 {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

/// Writes to a sibling temporary file and renames it into place.
void atomic_write(const std::string& path, const std::string& content);

class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed, std::string config_json);

  /// Records an emitted file with its SHA-256.
  void add_output(const std::string& path);
  nlohmann::json& extra() { return extra_; }
  nlohmann::json to_json() const;
  /// Re-hashes every output; false if any file changed or vanished.
  bool verify() const;
  void write(const std::string& path) const;

  const std::vector<std::pair<std::string, std::string>>& outputs() const { return outputs_; }

 private:
  std::string command_;
  std::uint64_t seed_;
  std::string config_json_;
  std::string timestamp_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  nlohmann::json extra_ = nlohmann::json::object();
};

}  // namespace su11
