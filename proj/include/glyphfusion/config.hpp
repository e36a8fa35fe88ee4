#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/evaluation.hpp"
#include "glyphfusion/style_encoder.hpp"

namespace glyphfusion {

enum class KeyType { kInt, kFloat, kString, kBool, kList };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

/// Every accepted configuration key with its default.
const std::vector<KeySpec>& config_keys();

/// Layered key-value configuration: defaults < file < GLYPHFUSION_<KEY>
/// environment variables < command-line overrides. Unknown keys are rejected.
class ExperimentConfig {
 public:
  ExperimentConfig();

  /// `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  void load_env();
  void set(const std::string& key, const std::string& value, const std::string& source = "cli");
  /// "key=value".
  void set_assignment(const std::string& assignment, const std::string& source = "cli");

  bool has_key(const std::string& key) const;
  const std::string& raw(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;
  std::filesystem::path get_path(const std::string& key) const;

  /// Where each value came from ("default", a file path, "env", "cli").
  const std::string& source(const std::string& key) const;
  nlohmann::json to_json() const;

  uint64_t seed() const { return static_cast<uint64_t>(get_int("seed")); }
  std::filesystem::path output_dir() const { return get_path("output_dir"); }
  /// Manifest directory, defaulting to <output_dir>/data.
  std::filesystem::path manifest_dir() const;
  /// Checkpoint paths, defaulting to files inside output_dir.
  std::filesystem::path fannet_checkpoint() const;
  std::filesystem::path diffusion_checkpoint() const;
  std::filesystem::path classifier_checkpoint() const;

  Alphabet alphabet() const;
  AugmentConfig augment() const;
  FannetTrainConfig fannet_train() const;
  DiffusionConfig diffusion() const;
  DiffusionTrainConfig diffusion_train() const;
  ClassifierTrainConfig classifier_train() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> sources_;
};

}  // namespace glyphfusion
