#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glyphfusion/image.hpp"

namespace glyphfusion {

/// Entry point of the glyphfusion tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

struct LabeledImage {
  std::string rel_path;
  GlyphImage image;
  /// Class index from the file name (<letter>.png or <letter>_*.png), if any.
  std::optional<int> label;
  /// git blob hash of the file.
  std::string hash;
};

/// Digest of an image set: relative paths and file hashes, in order.
std::string image_set_hash(const std::vector<LabeledImage>& images);

/// Every *.png below `dir`, sorted by relative path.
std::vector<LabeledImage> load_image_dir(const std::filesystem::path& dir, const Alphabet& alphabet, int side);

/// Content hash used in run records: checkpoint content hash for .ckpt
/// files, git blob hash otherwise.
std::string output_hash(const std::filesystem::path& path);

/// Exclusive ownership of a directory for one invocation (O_EXCL lock file).
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace glyphfusion
