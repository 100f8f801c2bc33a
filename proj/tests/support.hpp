#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "contextgpt/io.hpp"
#include "contextgpt/pipeline.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_dir() { return CONTEXTGPT_DATA_DIR; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("contextgpt-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Copies a shipped dataset into `dir` and returns its config, with the
/// response cache placed next to it.
inline contextgpt::RunConfig dataset_config(const std::string& name, const TempDir& dir) {
  for (const auto& entry : fs::directory_iterator(data_dir() / name))
    if (entry.path().extension() != ".emb" && entry.path().filename().string().find(".emb.") == std::string::npos)
      fs::copy_file(entry.path(), dir.path() / entry.path().filename(), fs::copy_options::overwrite_existing);
  auto cfg = contextgpt::RunConfig::load(dir.path() / "config.json");
  cfg.cache = dir.path() / "cache.jsonl";
  return cfg;
}

inline contextgpt::ContextSchema load_schema(const std::string& name) {
  return contextgpt::ContextSchema::load(data_dir() / name / "schema.json");
}

}  // namespace testsupport
