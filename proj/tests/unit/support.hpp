#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "vaxmap/error.hpp"

namespace vaxmap::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("vaxmap-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

}  // namespace vaxmap::testing

// Asserts that `stmt` throws vaxmap::Error of `kind` whose message contains `needle`.
#define EXPECT_VAXMAP_ERROR(stmt, expected_kind, needle)                                         \
  do {                                                                                  \
    try {                                                                               \
      stmt;                                                                             \
      ADD_FAILURE() << "expected " << ::vaxmap::to_string(expected_kind) << " error";            \
    } catch (const ::vaxmap::Error& e_) {                                               \
      EXPECT_EQ(e_.kind(), expected_kind) << e_.what();                                          \
      EXPECT_NE(std::string(e_.what()).find(needle), std::string::npos) << e_.what();   \
    }                                                                                   \
  } while (0)
