#include "glyphfusion/diffusion.hpp"

#include <cmath>

#include "glyphfusion/error.hpp"
#include "glyphfusion/random.hpp"

using json = nlohmann::json;

namespace glyphfusion {

UNetConfig DiffusionConfig::unet() const {
  UNetConfig u;
  u.canvas_side = canvas_side;
  u.base_channels = base_channels;
  u.channel_mult = channel_mult;
  u.num_classes = alphabet.size();
  u.style_dim = style_dim;
  u.mid_attention = mid_attention;
  return u;
}

json DiffusionConfig::to_json() const {
  return {{"T", T},           {"canvas_side", canvas_side}, {"base_channels", base_channels},
          {"channel_mult", channel_mult}, {"mid_attention", mid_attention}, {"style_dim", style_dim},
          {"alphabet", alphabet.letters()}, {"w", w}, {"p_drop", p_drop}};
}

DiffusionConfig DiffusionConfig::from_json(const json& j) {
  DiffusionConfig c;
  c.T = j.at("T").get<int>();
  c.canvas_side = j.at("canvas_side").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.channel_mult = j.at("channel_mult").get<std::vector<int>>();
  c.mid_attention = j.at("mid_attention").get<bool>();
  c.style_dim = j.at("style_dim").get<int>();
  c.alphabet = Alphabet(j.at("alphabet").get<std::string>());
  c.w = j.at("w").get<double>();
  c.p_drop = j.at("p_drop").get<double>();
  return c;
}

namespace {

UNet make_unet(const UNetConfig& cfg, uint64_t init_seed) {
  torch::manual_seed(derive_seed(init_seed, "init"));
  return UNet(cfg);
}

}  // namespace

DiffusionModel::DiffusionModel(DiffusionConfig cfg, std::string encoder_hash, uint64_t init_seed)
    : cfg_(std::move(cfg)),
      sched_(cosine_schedule(cfg_.T)),
      net_(make_unet(cfg_.unet(), init_seed)),
      encoder_hash_(std::move(encoder_hash)) {
  require(cfg_.w >= 0.0, ErrorKind::kInvalidArgument, "guidance scale must be non-negative");
  require(cfg_.p_drop >= 0.0 && cfg_.p_drop < 1.0, ErrorKind::kInvalidArgument, "p_drop must lie in [0,1)");
}

TensorStore DiffusionModel::to_store() const {
  TensorStore store;
  export_module(*net_.ptr(), "unet.", store);
  for (const auto& [k, v] : optim_.tensors) store.tensors["adam." + k] = v;
  store.metadata = {{"kind", "diffusion"},
                    {"config", cfg_.to_json()},
                    {"schedule", {{"kind", sched_.kind}, {"T", sched_.T}, {"offset", sched_.offset}}},
                    {"w", cfg_.w},
                    {"p_drop", cfg_.p_drop},
                    {"d", cfg_.style_dim},
                    {"alphabet", cfg_.alphabet.letters()},
                    {"canvas_side", cfg_.canvas_side},
                    {"fannet_hash", encoder_hash_},
                    {"step", step_},
                    {"training", training_}};
  return store;
}

void DiffusionModel::save(const std::filesystem::path& path) const {
  auto store = to_store();
  store.metadata["created_at"] = utc_timestamp();
  save_tensor_store(path, store);
}

std::string DiffusionModel::hash() const { return content_hash(to_store()); }

DiffusionModel DiffusionModel::load(const std::filesystem::path& path) {
  auto store = load_tensor_store(path);
  require(store.metadata.value("kind", "") == "diffusion", ErrorKind::kDecodeFailure,
          path.string() + " is not a diffusion checkpoint");
  DiffusionModel model(DiffusionConfig::from_json(store.metadata.at("config")),
                       store.metadata.value("fannet_hash", std::string()));
  import_module(*model.net_.ptr(), "unet.", store);
  model.step_ = store.metadata.value("step", int64_t{0});
  model.training_ = store.metadata.value("training", json::object());
  for (const auto& [k, v] : store.tensors) {
    if (k.rfind("adam.", 0) == 0) model.optim_.tensors[k.substr(5)] = v;
  }
  return model;
}

void DiffusionModel::check_encoder(const StyleEncoder& encoder, bool allow_mismatch) const {
  require(encoder.style_dim() == cfg_.style_dim, ErrorKind::kDimensionMismatch,
          "encoder style dimension " + std::to_string(encoder.style_dim()) + " != " + std::to_string(cfg_.style_dim));
  if (allow_mismatch || encoder_hash_.empty()) return;
  const auto h = encoder.hash();
  require(h == encoder_hash_, ErrorKind::kEncoderMismatch,
          "style encoder " + h.substr(0, 12) + " differs from training encoder " + encoder_hash_.substr(0, 12));
}

torch::Tensor DiffusionModel::predict_noise_batch(const torch::Tensor& x_t, int t, const torch::Tensor& cls,
                                                  const torch::Tensor& cls_mask, const torch::Tensor& style,
                                                  const torch::Tensor& style_mask) const {
  require(t >= 1 && t <= sched_.T, ErrorKind::kStepOutOfRange,
          "step " + std::to_string(t) + " outside [1, " + std::to_string(sched_.T) + "]");
  require(x_t.dim() == 4 && x_t.size(1) == 1 && x_t.size(2) == cfg_.canvas_side && x_t.size(3) == cfg_.canvas_side,
          ErrorKind::kShapeMismatch, "x_t must be [B,1," + std::to_string(cfg_.canvas_side) + "," +
                                         std::to_string(cfg_.canvas_side) + "]");
  torch::NoGradGuard no_grad;
  auto steps = torch::full({x_t.size(0)}, static_cast<int64_t>(t), torch::kInt64);
  return net_.ptr()->forward(x_t, steps, cls, cls_mask, style, style_mask);
}

torch::Tensor DiffusionModel::predict_noise(const torch::Tensor& x_t, int t, const ClassCond& c,
                                            const StyleCond& s) const {
  require(x_t.dim() == 4, ErrorKind::kShapeMismatch, "x_t must be [B,1,H,W]");
  const int64_t b = x_t.size(0);
  if (c) {
    require(c->index >= 0 && c->index < cfg_.alphabet.size(), ErrorKind::kInvalidArgument, "class outside alphabet");
  }
  if (s) {
    require(s->dim() == cfg_.style_dim, ErrorKind::kDimensionMismatch,
            "style dimension " + std::to_string(s->dim()) + " != " + std::to_string(cfg_.style_dim));
  }
  auto cls = torch::full({b}, static_cast<int64_t>(c ? c->index : 0), torch::kInt64);
  auto cls_mask = torch::full({b}, c ? 1.0f : 0.0f);
  auto style = s ? s->tensor().unsqueeze(0).expand({b, cfg_.style_dim}).contiguous()
                 : torch::zeros({b, cfg_.style_dim});
  auto style_mask = torch::full({b}, s ? 1.0f : 0.0f);
  return predict_noise_batch(x_t, t, cls, cls_mask, style, style_mask);
}

torch::Tensor DiffusionModel::guided_noise(const torch::Tensor& x_t, int t, const ClassCond& c, const StyleCond& s,
                                           double w) const {
  require(w >= 0.0, ErrorKind::kInvalidArgument, "guidance scale must be non-negative");
  auto uncond = predict_noise(x_t, t, std::nullopt, std::nullopt);
  auto cond = predict_noise(x_t, t, c, s);
  return uncond * (1.0 - w) + cond * w;
}

torch::Tensor reverse_process(const torch::Tensor& x_start, int t_start, const NoiseSchedule& sched,
                              const std::function<torch::Tensor(const torch::Tensor&, int)>& eps_fn,
                              torch::Generator& gen) {
  require(t_start >= 0 && t_start <= sched.T, ErrorKind::kStepOutOfRange, "start step outside [0, T]");
  auto x = x_start;
  for (int t = t_start; t >= 1; --t) {
    auto eps = eps_fn(x, t);
    require(torch::isfinite(eps).all().item<bool>(), ErrorKind::kDivergence,
            "non-finite noise prediction at step " + std::to_string(t));
    x = denoise_step(x, t, eps, sched, gen);
  }
  return x;
}

GlyphImage DiffusionModel::sample(const ClassCond& c, const StyleCond& s, double w, uint64_t seed) const {
  auto gen = make_generator(seed);
  const int side = cfg_.canvas_side;
  auto x = torch::randn({1, 1, side, side}, gen);
  x = reverse_process(x, sched_.T, sched_, [&](const torch::Tensor& xt, int t) { return guided_noise(xt, t, c, s, w); },
                      gen);
  return from_model_range(x[0]);
}

std::vector<GlyphImage> DiffusionModel::sample_batch(const torch::Tensor& cls, const torch::Tensor& style,
                                                     const torch::Tensor& style_mask, double w, uint64_t seed) const {
  require(w >= 0.0, ErrorKind::kInvalidArgument, "guidance scale must be non-negative");
  const int64_t b = cls.size(0);
  auto gen = make_generator(seed);
  const int side = cfg_.canvas_side;
  auto ones = torch::ones({b});
  auto zeros = torch::zeros({b});
  auto x = torch::randn({b, 1, side, side}, gen);
  x = reverse_process(x, sched_.T, sched_,
                      [&](const torch::Tensor& xt, int t) {
                        auto uncond = predict_noise_batch(xt, t, cls, zeros, style, zeros);
                        auto cond = predict_noise_batch(xt, t, cls, ones, style, style_mask);
                        return uncond * (1.0 - w) + cond * w;
                      },
                      gen);
  std::vector<GlyphImage> out;
  for (int64_t i = 0; i < b; ++i) out.push_back(from_model_range(x[i]));
  return out;
}

DiffusionTrainer::DiffusionTrainer(DiffusionModel& model, const DiffusionTrainConfig& cfg)
    : model_(model), cfg_(cfg), opt_(model.net()->parameters(), torch::optim::AdamOptions(cfg.lr)) {
  require(cfg.batch_size > 0, ErrorKind::kInvalidArgument, "batch size must be positive");
  const auto& stored = model.optimizer_state().tensors;
  if (stored.empty()) return;
  for (const auto& p : model.net()->named_parameters(true)) {
    auto find = [&](const std::string& suffix) {
      auto it = stored.find(p.key() + "." + suffix);
      require(it != stored.end(), ErrorKind::kDecodeFailure, "optimizer state lacks " + p.key());
      return it->second;
    };
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(find("step").item<int64_t>());
    st->exp_avg(find("exp_avg").clone());
    st->exp_avg_sq(find("exp_avg_sq").clone());
    opt_.state()[p.value().unsafeGetTensorImpl()] = std::move(st);
  }
}

void DiffusionTrainer::export_state() {
  TensorStore store;
  for (const auto& p : model_.net()->named_parameters(true)) {
    auto it = opt_.state().find(p.value().unsafeGetTensorImpl());
    if (it == opt_.state().end()) continue;
    auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
    store.tensors[p.key() + ".step"] = torch::tensor({st.step()}, torch::kInt64);
    store.tensors[p.key() + ".exp_avg"] = st.exp_avg().detach().clone();
    store.tensors[p.key() + ".exp_avg_sq"] = st.exp_avg_sq().detach().clone();
  }
  model_.optimizer_state() = std::move(store);
}

double DiffusionTrainer::train_step(const torch::Tensor& x0_ink, const torch::Tensor& labels,
                                    const torch::Tensor& styles) {
  const auto& cfg = model_.config();
  const int64_t b = x0_ink.size(0);
  require(labels.numel() == b && styles.size(0) == b, ErrorKind::kShapeMismatch, "batch parts differ in size");
  auto gen = make_generator(derive_seed(cfg_.seed, "diffusion-step", static_cast<uint64_t>(model_.step())));
  auto t = torch::randint(1, cfg.T + 1, {b}, gen, torch::kInt64);
  auto x0 = x0_ink.to(torch::kFloat32) * 2.0 - 1.0;
  auto eps = torch::randn(x0.sizes(), gen);
  auto u = torch::rand({b}, gen);
  auto v = torch::rand({b}, gen);
  auto joint = u < cfg.p_drop;
  auto style_only = joint.logical_not().logical_and(v < cfg.p_drop);
  auto cls_mask = joint.logical_not().to(torch::kFloat32);
  auto style_mask = joint.logical_or(style_only).logical_not().to(torch::kFloat32);

  auto xt = forward_noise(x0, t, eps, model_.schedule());
  auto pred = model_.net()->forward(xt, t, labels.to(torch::kInt64), cls_mask, styles.to(torch::kFloat32), style_mask);
  auto loss = torch::mse_loss(pred, eps);
  const double lv = loss.item<double>();
  require(std::isfinite(lv), ErrorKind::kDivergence,
          "diffusion loss became non-finite at step " + std::to_string(model_.step()));
  opt_.zero_grad();
  loss.backward();
  opt_.step();
  model_.set_step(model_.step() + 1);
  return lv;
}

DiffusionTrainResult train_diffusion(DiffusionModel& model, const Manifest& train, const StyleEncoder& encoder,
                                     const DiffusionTrainConfig& cfg, const CheckpointHook& on_checkpoint) {
  require(!train.records.empty(), ErrorKind::kEmptyCorpus, "diffusion training needs fonts");
  require(train.canvas_side == model.config().canvas_side, ErrorKind::kShapeMismatch,
          "manifest canvas differs from the model canvas");
  require(train.alphabet == model.config().alphabet, ErrorKind::kInvalidArgument,
          "manifest alphabet differs from the model alphabet");
  require(encoder.style_dim() == model.config().style_dim, ErrorKind::kDimensionMismatch,
          "encoder style dimension differs from the model");
  GlyphDataset data(train);

  std::vector<torch::Tensor> chunks;
  for (int64_t i = 0; i < data.size(); i += 256) {
    std::vector<int64_t> idx;
    for (int64_t j = i; j < std::min(data.size(), i + 256); ++j) idx.push_back(j);
    chunks.push_back(encoder.encode_batch(data.images_tensor(idx)));
  }
  const auto styles = torch::cat(chunks, 0);

  DiffusionTrainer trainer(model, cfg);
  BatchStream stream(data.size(), cfg.batch_size, derive_seed(cfg.seed, "data"));
  DiffusionTrainResult result;
  result.first_step = model.step();
  model.net()->train();
  while (model.step() < cfg.iters) {
    const int64_t step = model.step();
    const auto idx = stream.batch(step);
    Rng aug(derive_seed(cfg.seed, "augment", static_cast<uint64_t>(step)));
    auto x0 = data.images_tensor(idx, &aug, cfg.augment);
    auto labels = data.labels_tensor(idx);
    auto s = styles.index_select(0, torch::tensor(idx, torch::kInt64));
    const double loss = trainer.train_step(x0, labels, s);
    result.loss.push_back(loss);
    if (cfg.log_every > 0 && model.step() % cfg.log_every == 0) {
      log_info("diffusion step " + std::to_string(model.step()) + " loss " + std::to_string(loss));
    }
    if (cfg.save_every > 0 && model.step() % cfg.save_every == 0 && model.step() < cfg.iters && on_checkpoint) {
      trainer.export_state();
      on_checkpoint(model, result.loss);
    }
  }
  model.net()->eval();
  trainer.export_state();
  if (on_checkpoint) on_checkpoint(model, result.loss);
  return result;
}

std::pair<double, double> moving_average_ends(const std::vector<double>& loss, size_t window) {
  require(window > 0 && loss.size() >= window, ErrorKind::kInvalidArgument, "loss curve shorter than the window");
  double head = 0, tail = 0;
  for (size_t i = 0; i < window; ++i) {
    head += loss[i];
    tail += loss[loss.size() - window + i];
  }
  return {head / static_cast<double>(window), tail / static_cast<double>(window)};
}

}  // namespace glyphfusion
