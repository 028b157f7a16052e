#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vaxmap::cli {

namespace fs = std::filesystem;

/// Record of one run: inputs and outputs with SHA-256 digests, the merged
/// configuration, library versions and the seed. Written as manifest.json.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed, nlohmann::json config);

  void add_input(const fs::path& path);
  // Output paths are recorded relative to the output directory.
  void add_output(const fs::path& output_dir, const fs::path& path);
  const std::vector<fs::path>& inputs() const { return input_paths_; }

  void write(const fs::path& output_dir, const std::string& status, int exit_code) const;

 private:
  std::string command_;
  std::uint64_t seed_;
  nlohmann::json config_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  std::vector<fs::path> input_paths_;
};

nlohmann::json library_versions();

// error.json: {"command", "kind", "message", "exit_code"}.
void write_error_file(const fs::path& output_dir, const std::string& command, const std::string& kind,
                      const std::string& message, int exit_code);

}  // namespace vaxmap::cli
