#include "glyphfusion/style_encoder.hpp"

#include <cmath>

#include "glyphfusion/blend.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/random.hpp"

namespace nn = torch::nn;
using json = nlohmann::json;

namespace glyphfusion {

StyleVector::StyleVector(std::vector<float> values) : values_(std::move(values)) {
  for (float v : values_) require(std::isfinite(v), ErrorKind::kInvalidArgument, "style vector has non-finite entry");
}

StyleVector StyleVector::from_tensor(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat32).contiguous().reshape({-1});
  const float* p = x.data_ptr<float>();
  return StyleVector(std::vector<float>(p, p + x.numel()));
}

torch::Tensor StyleVector::tensor() const {
  return torch::from_blob(const_cast<float*>(values_.data()), {dim()}, torch::kFloat32).clone();
}

StyleVector StyleVector::operator+(const StyleVector& other) const {
  require(dim() == other.dim(), ErrorKind::kDimensionMismatch, "style vectors differ in dimension");
  std::vector<float> out(values_.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = values_[i] + other.values_[i];
  return StyleVector(std::move(out));
}

StyleVector StyleVector::operator*(float k) const {
  std::vector<float> out(values_.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = values_[i] * k;
  return StyleVector(std::move(out));
}

StyleVector blend(const StyleVector& a, const StyleVector& b, double lambda) {
  require(a.dim() == b.dim(), ErrorKind::kDimensionMismatch, "style vectors differ in dimension");
  const auto w = convex_weights(lambda);
  return a * w.first + b * w.second;
}

double cosine_similarity(const StyleVector& a, const StyleVector& b) {
  require(a.dim() == b.dim(), ErrorKind::kDimensionMismatch, "style vectors differ in dimension");
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < a.dim(); ++i) {
    const double x = a.values()[static_cast<size_t>(i)], y = b.values()[static_cast<size_t>(i)];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

json FannetConfig::to_json() const {
  return {{"style_dim", style_dim}, {"base_channels", base_channels}, {"canvas_side", canvas_side},
          {"alphabet", alphabet.letters()}};
}

FannetConfig FannetConfig::from_json(const json& j) {
  FannetConfig c;
  c.style_dim = j.at("style_dim").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.canvas_side = j.at("canvas_side").get<int>();
  c.alphabet = Alphabet(j.at("alphabet").get<std::string>());
  return c;
}

FannetImpl::FannetImpl(const FannetConfig& cfg) : cfg_(cfg) {
  require(cfg.canvas_side % 4 == 0 && cfg.canvas_side >= 8, ErrorKind::kInvalidArgument,
          "FANnet canvas side must be a multiple of 4");
  require(cfg.style_dim > 0 && cfg.base_channels > 0, ErrorKind::kInvalidArgument, "invalid FANnet sizes");
  const int c = cfg.base_channels;
  bottom_ = cfg.canvas_side / 4;
  const int flat = 4 * c * bottom_ * bottom_;
  const int k = cfg.alphabet.size();

  enc_convs_ = register_module(
      "enc_convs",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(1, c, 3).padding(1)), nn::BatchNorm2d(c), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)), nn::BatchNorm2d(2 * c), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)), nn::BatchNorm2d(4 * c),
                     nn::ReLU()));
  enc_fc_ = register_module("enc_fc", nn::Linear(flat, cfg.style_dim));
  dec_fc_ = register_module("dec_fc", nn::Linear(cfg.style_dim + k, flat));
  dec_bn_ = register_module("dec_bn", nn::BatchNorm1d(flat));
  dec_convs_ = register_module(
      "dec_convs",
      nn::Sequential(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(4 * c, 2 * c, 4).stride(2).padding(1)),
                     nn::BatchNorm2d(2 * c), nn::ReLU(),
                     nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * c, c, 4).stride(2).padding(1)),
                     nn::BatchNorm2d(c), nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(c, 1, 3).padding(1))));
}

torch::Tensor FannetImpl::encode(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == 1 && x.size(2) == cfg_.canvas_side && x.size(3) == cfg_.canvas_side,
          ErrorKind::kShapeMismatch, "FANnet input must be [B,1,side,side]");
  auto h = enc_convs_->forward(x);
  return enc_fc_(h.flatten(1));
}

torch::Tensor FannetImpl::decode(const torch::Tensor& style, const torch::Tensor& one_hot) {
  require(style.dim() == 2 && style.size(1) == cfg_.style_dim, ErrorKind::kDimensionMismatch,
          "style must be [B," + std::to_string(cfg_.style_dim) + "]");
  require(one_hot.dim() == 2 && one_hot.size(1) == cfg_.alphabet.size() && one_hot.size(0) == style.size(0),
          ErrorKind::kShapeMismatch, "class one-hot must be [B,K]");
  auto h = torch::relu(dec_bn_(dec_fc_(torch::cat({style, one_hot}, 1))));
  h = h.view({style.size(0), 4 * cfg_.base_channels, bottom_, bottom_});
  return torch::sigmoid(dec_convs_->forward(h));
}

json FannetImpl::layout() const {
  const int c = cfg_.base_channels;
  return {{"encoder", {"conv3x3(1," + std::to_string(c) + ")+bn+relu", "conv4x4s2+bn+relu", "conv4x4s2+bn+relu",
                       "linear->" + std::to_string(cfg_.style_dim)}},
          {"decoder", {"linear(d+K)+bn+relu", "convT4x4s2+bn+relu", "convT4x4s2+bn+relu", "conv3x3+sigmoid"}}};
}

StyleEncoder::StyleEncoder(FannetConfig cfg, Fannet model, json training)
    : cfg_(std::move(cfg)), model_(std::move(model)), training_(std::move(training)) {
  model_->eval();
}

TensorStore StyleEncoder::to_store() const {
  TensorStore store;
  json training = training_;
  training.erase("created_at");
  export_module(*model_.ptr(), "fannet.", store);
  store.metadata = {{"kind", "fannet"},
                    {"d", cfg_.style_dim},
                    {"alphabet", cfg_.alphabet.letters()},
                    {"canvas_side", cfg_.canvas_side},
                    {"seed", training_.value("seed", 0ull)},
                    {"created_at", training_.value("created_at", std::string())},
                    {"config", cfg_.to_json()},
                    {"layout", model_->layout()},
                    {"training", training}};
  return store;
}

void StyleEncoder::save(const std::filesystem::path& path) const { save_tensor_store(path, to_store()); }

std::string StyleEncoder::hash() const { return content_hash(to_store()); }

StyleEncoder StyleEncoder::load(const std::filesystem::path& path) {
  auto store = load_tensor_store(path);
  require(store.metadata.value("kind", "") == "fannet", ErrorKind::kDecodeFailure,
          path.string() + " is not a FANnet checkpoint");
  auto cfg = FannetConfig::from_json(store.metadata.at("config"));
  Fannet model(cfg);
  import_module(*model.ptr(), "fannet.", store);
  return StyleEncoder(cfg, model, store.metadata.value("training", json::object()));
}

torch::Tensor StyleEncoder::encode_batch(const torch::Tensor& ink) const {
  torch::NoGradGuard no_grad;
  return model_.ptr()->encode(ink.to(torch::kFloat32));
}

StyleVector StyleEncoder::encode(const GlyphImage& img) const {
  require(img.side() == cfg_.canvas_side, ErrorKind::kShapeMismatch,
          "image side " + std::to_string(img.side()) + " does not match checkpoint canvas " +
              std::to_string(cfg_.canvas_side));
  return StyleVector::from_tensor(encode_batch(to_tensor(img).unsqueeze(0)));
}

torch::Tensor StyleEncoder::decode_batch(const torch::Tensor& styles, const torch::Tensor& class_ids) const {
  torch::NoGradGuard no_grad;
  auto one_hot = torch::one_hot(class_ids.to(torch::kInt64), cfg_.alphabet.size()).to(torch::kFloat32);
  return model_.ptr()->decode(styles.to(torch::kFloat32), one_hot);
}

GlyphImage StyleEncoder::decode(const StyleVector& s, const CharClass& c) const {
  require(s.dim() == cfg_.style_dim, ErrorKind::kDimensionMismatch,
          "style dimension " + std::to_string(s.dim()) + " != " + std::to_string(cfg_.style_dim));
  require(c.index >= 0 && c.index < cfg_.alphabet.size(), ErrorKind::kInvalidArgument, "class outside alphabet");
  auto out = decode_batch(s.tensor().unsqueeze(0), torch::tensor({static_cast<int64_t>(c.index)}));
  return from_tensor(out[0]);
}

namespace {

struct PairBatch {
  torch::Tensor input;
  torch::Tensor target;
  torch::Tensor one_hot;
};

PairBatch draw_pairs(const GlyphDataset& data, int n, Rng& rng) {
  std::vector<int64_t> src, dst, cls;
  const int k = data.alphabet().size();
  for (int i = 0; i < n; ++i) {
    const int f = static_cast<int>(uniform_below(rng, static_cast<uint64_t>(data.num_fonts())));
    const int c1 = static_cast<int>(uniform_below(rng, static_cast<uint64_t>(k)));
    const int c2 = static_cast<int>(uniform_below(rng, static_cast<uint64_t>(k)));
    src.push_back(data.index_of(f, c1));
    dst.push_back(data.index_of(f, c2));
    cls.push_back(c2);
  }
  auto one_hot = torch::one_hot(torch::tensor(cls, torch::kInt64), k).to(torch::kFloat32);
  return {data.images_tensor(src), data.images_tensor(dst), one_hot};
}

}  // namespace

FannetTrainResult train_fannet(const Manifest& train, const Manifest& val, const FannetTrainConfig& cfg) {
  require(!train.records.empty() && !val.records.empty(), ErrorKind::kEmptyCorpus, "FANnet needs train and val fonts");
  require(cfg.batch_size > 0 && cfg.max_steps > 0 && cfg.eval_every > 0, ErrorKind::kInvalidArgument,
          "invalid FANnet training schedule");
  FannetConfig mcfg = cfg.model;
  mcfg.alphabet = train.alphabet;
  mcfg.canvas_side = train.canvas_side;

  GlyphDataset train_data(train);
  GlyphDataset val_data(val);
  Rng val_rng(derive_seed(cfg.seed, "fannet-val"));
  const PairBatch val_batch = draw_pairs(val_data, cfg.val_pairs, val_rng);

  torch::manual_seed(derive_seed(cfg.seed, "init"));
  Fannet model(mcfg);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(cfg.lr));

  FannetTrainResult result{StyleEncoder(mcfg, model), {}, {}, 0, 0};
  double best = std::numeric_limits<double>::infinity();
  TensorStore best_weights;
  int since_best = 0;

  auto evaluate = [&]() {
    torch::NoGradGuard no_grad;
    model->eval();
    auto pred = model->forward(val_batch.input, val_batch.one_hot);
    model->train();
    return (pred - val_batch.target).abs().mean().item<double>();
  };

  model->train();
  for (int step = 0; step < cfg.max_steps; ++step) {
    Rng rng(derive_seed(cfg.seed, "fannet-step", static_cast<uint64_t>(step)));
    auto batch = draw_pairs(train_data, cfg.batch_size, rng);
    auto pred = model->forward(batch.input, batch.one_hot);
    auto loss = (pred - batch.target).abs().mean();
    const double lv = loss.item<double>();
    require(std::isfinite(lv), ErrorKind::kDivergence, "FANnet loss became non-finite at step " + std::to_string(step));
    opt.zero_grad();
    loss.backward();
    opt.step();
    result.train_loss.push_back(lv);
    result.steps_run = step + 1;

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.max_steps) {
      const double v = evaluate();
      require(std::isfinite(v), ErrorKind::kDivergence, "FANnet validation loss became non-finite");
      result.val_loss.emplace_back(step + 1, v);
      if (v < best) {
        best = v;
        result.best_step = step + 1;
        best_weights = TensorStore{};
        export_module(*model, "", best_weights);
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        log_info("FANnet early stop at step " + std::to_string(step + 1));
        break;
      }
    }
  }
  if (!best_weights.tensors.empty()) import_module(*model, "", best_weights);

  json val_curve = json::array();
  for (const auto& [s, v] : result.val_loss) val_curve.push_back({s, v});
  json meta = {{"seed", cfg.seed},
               {"steps", result.steps_run},
               {"best_step", result.best_step},
               {"batch_size", cfg.batch_size},
               {"lr", cfg.lr},
               {"loss", "mean_absolute_error"},
               {"train_loss", result.train_loss},
               {"val_loss", val_curve},
               {"created_at", utc_timestamp()}};
  result.encoder = StyleEncoder(mcfg, model, meta);
  return result;
}

GlyphImage fannet_interpolate(const GlyphImage& r1, const GlyphImage& r2, double lambda, const CharClass& c,
                              const StyleEncoder& encoder) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kInvalidArgument, "lambda must lie in [0,1]");
  const auto s1 = encoder.encode(r1);
  const auto s2 = encoder.encode(r2);
  return encoder.decode(blend(s1, s2, lambda), c);
}

}  // namespace glyphfusion
