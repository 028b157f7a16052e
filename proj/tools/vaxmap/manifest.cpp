#include "manifest.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#define TOML_EXCEPTIONS 1
#include <CLI11.hpp>
#include <toml.hpp>

#include "vaxmap/io_util.hpp"

#ifndef VAXMAP_VERSION
#define VAXMAP_VERSION "0.0.0"
#endif

namespace vaxmap::cli {

namespace {

nlohmann::json file_entry(const std::string& name, const fs::path& path) {
  return {{"path", name}, {"bytes", fs::file_size(path)}, {"sha256", sha256_file(path)}};
}

}  // namespace

Manifest::Manifest(std::string command, std::uint64_t seed, nlohmann::json config)
    : command_(std::move(command)), seed_(seed), config_(std::move(config)) {}

void Manifest::add_input(const fs::path& path) {
  if (fs::is_directory(path)) return;
  input_paths_.push_back(path);
  inputs_.push_back(file_entry(path.generic_string(), path));
}

void Manifest::add_output(const fs::path& output_dir, const fs::path& path) {
  outputs_.push_back(file_entry(fs::relative(path, output_dir).generic_string(), path));
}

void Manifest::write(const fs::path& output_dir, const std::string& status, int exit_code) const {
  nlohmann::json j;
  j["tool"] = "vaxmap";
  j["version"] = VAXMAP_VERSION;
  j["command"] = command_;
  j["seed"] = seed_;
  j["status"] = status;
  j["exit_code"] = exit_code;
  j["versions"] = library_versions();
  j["config"] = config_;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  write_text_file(output_dir / "manifest.json", j.dump(2) + "\n");
}

nlohmann::json library_versions() {
  return {
      {"vaxmap", VAXMAP_VERSION},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"boost", BOOST_LIB_VERSION},
      {"crypto", crypto_library_version()},
      {"tomlplusplus", std::to_string(TOML_LIB_MAJOR) + "." + std::to_string(TOML_LIB_MINOR) + "." +
                           std::to_string(TOML_LIB_PATCH)},
      {"cli11", CLI11_VERSION},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                            "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
      {"compiler", __VERSION__},
  };
}

void write_error_file(const fs::path& output_dir, const std::string& command, const std::string& kind,
                      const std::string& message, int exit_code) {
  nlohmann::json j{{"command", command}, {"kind", kind}, {"message", message}, {"exit_code", exit_code}};
  write_text_file(output_dir / "error.json", j.dump(2) + "\n");
}

}  // namespace vaxmap::cli
