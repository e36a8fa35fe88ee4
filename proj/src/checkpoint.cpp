#include "glyphfusion/checkpoint.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "glyphfusion/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace glyphfusion {

namespace {

constexpr const char* kMetaKey = "glyphfusion";

std::string dtype_name(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return "F32";
    case torch::kFloat64: return "F64";
    case torch::kInt64: return "I64";
    default: raise(ErrorKind::kInvalidArgument, "unsupported tensor dtype for checkpoint");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "F32") return torch::kFloat32;
  if (s == "F64") return torch::kFloat64;
  if (s == "I64") return torch::kInt64;
  raise(ErrorKind::kDecodeFailure, "unsupported dtype " + s);
}

class Digest {
 public:
  explicit Digest(const EVP_MD* md) : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    require(ctx_ && EVP_DigestInit_ex(ctx_.get(), md, nullptr) == 1, ErrorKind::kIo, "digest init failed");
  }
  void update(const void* data, size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex() {
    unsigned char buf[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), buf, &len);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(buf[i]);
    return os.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

void save_tensor_store(const fs::path& path, const TensorStore& store) {
  json header = json::object();
  uint64_t offset = 0;
  std::vector<torch::Tensor> ordered;
  for (const auto& [name, t] : store.tensors) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    const uint64_t nbytes = static_cast<uint64_t>(c.numel()) * c.element_size();
    header[name] = {{"dtype", dtype_name(c)}, {"shape", c.sizes().vec()}, {"data_offsets", {offset, offset + nbytes}}};
    offset += nbytes;
    ordered.push_back(c);
  }
  header["__metadata__"] = {{kMetaKey, store.metadata.dump()}};
  std::string hdr = header.dump();
  while (hdr.size() % 8 != 0) hdr.push_back(' ');

  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    uint64_t n = hdr.size();
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>((n >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(len), 8);
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    for (const auto& t : ordered) {
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

TensorStore load_tensor_store(const fs::path& path) {
  const std::string bytes = read_file(path);
  require(bytes.size() >= 8, ErrorKind::kDecodeFailure, "checkpoint too small: " + path.string());
  uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[static_cast<size_t>(i)])) << (8 * i);
  require(n <= bytes.size() - 8, ErrorKind::kDecodeFailure, "checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(8, n));
  } catch (const json::exception& e) {
    raise(ErrorKind::kDecodeFailure, std::string("bad checkpoint header: ") + e.what());
  }
  const size_t data0 = 8 + n;
  TensorStore store;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (entry.contains(kMetaKey)) store.metadata = json::parse(entry.at(kMetaKey).get<std::string>());
      continue;
    }
    auto dtype = dtype_from(entry.at("dtype").get<std::string>());
    auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto offs = entry.at("data_offsets").get<std::vector<uint64_t>>();
    require(offs.size() == 2 && offs[0] <= offs[1] && data0 + offs[1] <= bytes.size(), ErrorKind::kDecodeFailure,
            "tensor " + name + " out of bounds");
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    require(static_cast<uint64_t>(t.numel() * t.element_size()) == offs[1] - offs[0], ErrorKind::kDecodeFailure,
            "tensor " + name + " size mismatch");
    std::memcpy(t.data_ptr(), bytes.data() + data0 + offs[0], offs[1] - offs[0]);
    store.tensors.emplace(name, std::move(t));
  }
  return store;
}

void export_module(const torch::nn::Module& module, const std::string& prefix, TensorStore& store) {
  for (const auto& p : module.named_parameters(true)) store.tensors[prefix + p.key()] = p.value().detach().clone();
  for (const auto& b : module.named_buffers(true)) store.tensors[prefix + b.key()] = b.value().detach().clone();
}

void import_module(torch::nn::Module& module, const std::string& prefix, const TensorStore& store) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    auto it = store.tensors.find(prefix + key);
    require(it != store.tensors.end(), ErrorKind::kDecodeFailure, "checkpoint lacks tensor " + prefix + key);
    require(it->second.sizes() == target.sizes(), ErrorKind::kShapeMismatch,
            "tensor " + prefix + key + " has incompatible shape");
    target.copy_(it->second);
  };
  for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

std::string sha256_file(const fs::path& path) {
  Digest d(EVP_sha256());
  d.update(read_file(path));
  return d.hex();
}

std::string sha256_hex(std::string_view bytes) {
  Digest d(EVP_sha256());
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string git_blob_hash(const fs::path& path) {
  const std::string content = read_file(path);
  Digest d(EVP_sha1());
  d.update("blob " + std::to_string(content.size()));
  d.update("\0", 1);
  d.update(content);
  return d.hex();
}

std::string content_hash(const TensorStore& store) {
  Digest d(EVP_sha256());
  json meta = store.metadata;
  if (meta.is_object()) meta.erase("created_at");
  d.update(meta.dump());
  for (const auto& [name, t] : store.tensors) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    d.update(name);
    d.update(dtype_name(c));
    for (auto s : c.sizes()) d.update(std::to_string(s) + ",");
    d.update(c.data_ptr(), static_cast<size_t>(c.numel() * c.element_size()));
  }
  return d.hex();
}

std::string content_hash(const fs::path& checkpoint) { return content_hash(load_tensor_store(checkpoint)); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    out << content;
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace glyphfusion
