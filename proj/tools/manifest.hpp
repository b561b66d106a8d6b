#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cellloc::cli {

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(std::string_view bytes);

/// Record written next to every command output. Holds everything needed to
/// rerun the command: the resolved config, the data location and digests of
/// every input file. It deliberately carries no timestamps or host data.
struct RunManifest {
  std::string command;
  std::string tool_version;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;  ///< empty for commands without a data dir
  /// Digest of the config/scenario file as given on the command line. The
  /// resolved config above is authoritative; this is for audit only.
  std::optional<std::pair<std::string, std::string>> config_source;
  std::vector<std::pair<std::string, std::string>> inputs;   ///< name, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  ///< name, sha256

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  void add_input(const std::filesystem::path& path, const std::string& name);
  void add_output(const std::filesystem::path& path, const std::string& name);
  /// Throws DataError when an input file is missing or its digest changed.
  void verify_inputs(const std::filesystem::path& root) const;
};

inline constexpr const char* kManifestName = "manifest.json";

}  // namespace cellloc::cli
