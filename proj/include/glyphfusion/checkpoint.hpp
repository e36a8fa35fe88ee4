#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>
#include <torch/torch.h>

namespace glyphfusion {

/// Named weight arrays plus JSON metadata. Stored in the safetensors layout:
/// u64 little-endian header length, JSON header, raw tensor bytes. The
/// metadata object travels as a JSON string under "__metadata__"."glyphfusion".
struct TensorStore {
  std::map<std::string, torch::Tensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Writes to a temporary sibling, then renames into place.
void save_tensor_store(const std::filesystem::path& path, const TensorStore& store);
TensorStore load_tensor_store(const std::filesystem::path& path);

/// Copies parameters and buffers of `module` into the store under `prefix`.
void export_module(const torch::nn::Module& module, const std::string& prefix, TensorStore& store);
/// Copies matching tensors back; throws kShapeMismatch / kDecodeFailure on
/// any missing or misshapen entry.
void import_module(torch::nn::Module& module, const std::string& prefix, const TensorStore& store);

/// Hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);
/// Hex SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_hash(const std::filesystem::path& path);

/// SHA-256 over tensors and metadata, ignoring the volatile "created_at"
/// field. Two checkpoints with equal weights and settings hash equal.
std::string content_hash(const TensorStore& store);
std::string content_hash(const std::filesystem::path& checkpoint);

/// ISO-8601 UTC timestamp.
std::string utc_timestamp();

/// Atomic text write.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace glyphfusion
