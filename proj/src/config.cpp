#include "glyphfusion/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "glyphfusion/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace glyphfusion {

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", KeyType::kInt, "0", "global seed; sub-streams are derived by name"},
      {"threads", KeyType::kInt, "1", "intra-op threads (1 keeps runs bit-reproducible)"},
      {"data_root", KeyType::kString, "", "corpus directory (font files or per-font PNG folders)"},
      {"output_dir", KeyType::kString, "runs/default", "experiment directory"},
      {"manifest_dir", KeyType::kString, "", "manifest directory (default <output_dir>/data)"},
      {"fannet_ckpt", KeyType::kString, "", "FANnet checkpoint (default <output_dir>/fannet.ckpt)"},
      {"diffusion_ckpt", KeyType::kString, "", "diffusion checkpoint (default <output_dir>/diffusion.ckpt)"},
      {"classifier_ckpt", KeyType::kString, "", "classifier checkpoint (default <output_dir>/classifier.ckpt)"},
      {"allow_encoder_mismatch", KeyType::kBool, "false", "sample even if the encoder hash differs"},
      {"canvas_side", KeyType::kInt, "32", "glyph canvas side in pixels"},
      {"alphabet", KeyType::kString, "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "ordered character classes"},
      {"split_ratios", KeyType::kList, "0.8,0.1,0.1", "train,val,test fractions"},
      {"split_seed", KeyType::kInt, "0", "seed of the font split"},
      {"augment_prob", KeyType::kFloat, "0.3", "probability of a random shift"},
      {"augment_max_frac", KeyType::kFloat, "0.2", "largest shift as a fraction of the side"},
      {"T", KeyType::kInt, "200", "diffusion steps"},
      {"base_channels", KeyType::kInt, "64", "U-Net base width"},
      {"channel_mult", KeyType::kList, "1,2,2", "U-Net width multiplier per level"},
      {"mid_attention", KeyType::kBool, "true", "self-attention at the U-Net bottleneck"},
      {"batch_size", KeyType::kInt, "64", "diffusion batch size"},
      {"lr", KeyType::kFloat, "0.0001", "diffusion Adam learning rate"},
      {"iters", KeyType::kInt, "20000", "diffusion training steps"},
      {"p_drop", KeyType::kFloat, "0.1", "condition dropout probability"},
      {"w", KeyType::kFloat, "3.0", "guidance scale"},
      {"save_every", KeyType::kInt, "1000", "diffusion checkpoint interval in steps"},
      {"style_dim", KeyType::kInt, "512", "style vector dimension"},
      {"fannet_channels", KeyType::kInt, "16", "FANnet base width"},
      {"fannet_batch_size", KeyType::kInt, "64", "FANnet batch size"},
      {"fannet_lr", KeyType::kFloat, "0.001", "FANnet Adam learning rate"},
      {"fannet_steps", KeyType::kInt, "2000", "FANnet maximum steps"},
      {"fannet_eval_every", KeyType::kInt, "100", "FANnet validation interval"},
      {"fannet_patience", KeyType::kInt, "5", "validations without improvement before stopping"},
      {"clf_channels", KeyType::kInt, "32", "classifier base width"},
      {"clf_stages", KeyType::kInt, "3", "classifier residual stages"},
      {"clf_epochs", KeyType::kInt, "5", "classifier epochs"},
      {"clf_batch_size", KeyType::kInt, "64", "classifier batch size"},
      {"clf_lr", KeyType::kFloat, "0.001", "classifier Adam learning rate"},
      {"t_prime", KeyType::kInt, "-1", "image-blend restart step (-1 means T/2)"},
      {"sweep_steps", KeyType::kInt, "49", "lambda values in a sweep"},
  };
  return keys;
}

namespace {

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (k.name == key) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty(), ErrorKind::kConfig, key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty(), ErrorKind::kConfig, key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  raise(ErrorKind::kConfig, key + ": expected true/false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  require(!out.empty(), ErrorKind::kConfig, key + ": expected a comma-separated list");
  return out;
}

void validate(const KeySpec& spec, const std::string& v) {
  switch (spec.type) {
    case KeyType::kInt: parse_int(spec.name, v); break;
    case KeyType::kFloat: parse_double(spec.name, v); break;
    case KeyType::kBool: parse_bool(spec.name, v); break;
    case KeyType::kList: parse_list(spec.name, v); break;
    case KeyType::kString: break;
  }
}

std::string env_name(const std::string& key) {
  std::string out = "GLYPHFUSION_";
  for (char ch : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : config_keys()) {
    values_[k.name] = k.default_value;
    sources_[k.name] = "default";
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value, const std::string& source) {
  const KeySpec* spec = find_key(key);
  require(spec != nullptr, ErrorKind::kConfig, "unknown config key '" + key + "' (from " + source + ")");
  validate(*spec, value);
  values_[key] = value;
  sources_[key] = source;
}

void ExperimentConfig::set_assignment(const std::string& assignment, const std::string& source) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorKind::kConfig, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), source);
}

void ExperimentConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line, path.string());
    } catch (const Error& e) {
      raise(ErrorKind::kConfig, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void ExperimentConfig::load_env() {
  for (const auto& k : config_keys()) {
    if (const char* v = std::getenv(env_name(k.name).c_str())) set(k.name, v, "env");
  }
}

bool ExperimentConfig::has_key(const std::string& key) const { return find_key(key) != nullptr; }

const std::string& ExperimentConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

int64_t ExperimentConfig::get_int(const std::string& key) const { return parse_int(key, raw(key)); }
double ExperimentConfig::get_double(const std::string& key) const { return parse_double(key, raw(key)); }
bool ExperimentConfig::get_bool(const std::string& key) const { return parse_bool(key, raw(key)); }
std::string ExperimentConfig::get_string(const std::string& key) const { return raw(key); }
std::vector<double> ExperimentConfig::get_list(const std::string& key) const { return parse_list(key, raw(key)); }
fs::path ExperimentConfig::get_path(const std::string& key) const { return fs::path(raw(key)); }

const std::string& ExperimentConfig::source(const std::string& key) const {
  auto it = sources_.find(key);
  require(it != sources_.end(), ErrorKind::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

json ExperimentConfig::to_json() const {
  json j = json::object();
  for (const auto& k : config_keys()) {
    const auto& v = raw(k.name);
    switch (k.type) {
      case KeyType::kInt: j[k.name] = parse_int(k.name, v); break;
      case KeyType::kFloat: j[k.name] = parse_double(k.name, v); break;
      case KeyType::kBool: j[k.name] = parse_bool(k.name, v); break;
      case KeyType::kList: j[k.name] = parse_list(k.name, v); break;
      case KeyType::kString: j[k.name] = v; break;
    }
  }
  return j;
}

fs::path ExperimentConfig::manifest_dir() const {
  const auto v = raw("manifest_dir");
  return v.empty() ? output_dir() / "data" : fs::path(v);
}

fs::path ExperimentConfig::fannet_checkpoint() const {
  const auto v = raw("fannet_ckpt");
  return v.empty() ? output_dir() / "fannet.ckpt" : fs::path(v);
}

fs::path ExperimentConfig::diffusion_checkpoint() const {
  const auto v = raw("diffusion_ckpt");
  return v.empty() ? output_dir() / "diffusion.ckpt" : fs::path(v);
}

fs::path ExperimentConfig::classifier_checkpoint() const {
  const auto v = raw("classifier_ckpt");
  return v.empty() ? output_dir() / "classifier.ckpt" : fs::path(v);
}

Alphabet ExperimentConfig::alphabet() const { return Alphabet(get_string("alphabet")); }

AugmentConfig ExperimentConfig::augment() const {
  return {get_double("augment_prob"), get_double("augment_max_frac")};
}

FannetTrainConfig ExperimentConfig::fannet_train() const {
  FannetTrainConfig c;
  c.model.style_dim = static_cast<int>(get_int("style_dim"));
  c.model.base_channels = static_cast<int>(get_int("fannet_channels"));
  c.model.canvas_side = static_cast<int>(get_int("canvas_side"));
  c.model.alphabet = alphabet();
  c.batch_size = static_cast<int>(get_int("fannet_batch_size"));
  c.lr = get_double("fannet_lr");
  c.max_steps = static_cast<int>(get_int("fannet_steps"));
  c.eval_every = static_cast<int>(get_int("fannet_eval_every"));
  c.patience = static_cast<int>(get_int("fannet_patience"));
  c.seed = derive_seed(seed(), "fannet");
  return c;
}

DiffusionConfig ExperimentConfig::diffusion() const {
  DiffusionConfig c;
  c.T = static_cast<int>(get_int("T"));
  c.canvas_side = static_cast<int>(get_int("canvas_side"));
  c.base_channels = static_cast<int>(get_int("base_channels"));
  c.channel_mult.clear();
  for (double m : get_list("channel_mult")) c.channel_mult.push_back(static_cast<int>(m));
  c.mid_attention = get_bool("mid_attention");
  c.style_dim = static_cast<int>(get_int("style_dim"));
  c.alphabet = alphabet();
  c.w = get_double("w");
  c.p_drop = get_double("p_drop");
  return c;
}

DiffusionTrainConfig ExperimentConfig::diffusion_train() const {
  DiffusionTrainConfig c;
  c.batch_size = static_cast<int>(get_int("batch_size"));
  c.lr = get_double("lr");
  c.iters = get_int("iters");
  c.seed = derive_seed(seed(), "diffusion");
  c.augment = augment();
  c.save_every = get_int("save_every");
  return c;
}

ClassifierTrainConfig ExperimentConfig::classifier_train() const {
  ClassifierTrainConfig c;
  c.model.canvas_side = static_cast<int>(get_int("canvas_side"));
  c.model.alphabet = alphabet();
  c.model.base_channels = static_cast<int>(get_int("clf_channels"));
  c.model.stages = static_cast<int>(get_int("clf_stages"));
  c.batch_size = static_cast<int>(get_int("clf_batch_size"));
  c.lr = get_double("clf_lr");
  c.epochs = static_cast<int>(get_int("clf_epochs"));
  c.seed = derive_seed(seed(), "classifier");
  c.augment = augment();
  return c;
}

}  // namespace glyphfusion
