#include "glyphfusion/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "glyphfusion/error.hpp"
#include "glyphfusion/random.hpp"

namespace nn = torch::nn;
using json = nlohmann::json;

namespace glyphfusion {

json ClassifierConfig::to_json() const {
  return {{"canvas_side", canvas_side}, {"alphabet", alphabet.letters()}, {"base_channels", base_channels},
          {"stages", stages}};
}

ClassifierConfig ClassifierConfig::from_json(const json& j) {
  ClassifierConfig c;
  c.canvas_side = j.at("canvas_side").get<int>();
  c.alphabet = Alphabet(j.at("alphabet").get<std::string>());
  c.base_channels = j.at("base_channels").get<int>();
  c.stages = j.at("stages").get<int>();
  return c;
}

BasicBlockImpl::BasicBlockImpl(int in_ch, int out_ch, int stride) {
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out_ch));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_ch, out_ch, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out_ch));
  if (stride != 1 || in_ch != out_ch) {
    proj_ = register_module("proj", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 1).stride(stride).bias(false)));
    proj_bn_ = register_module("proj_bn", nn::BatchNorm2d(out_ch));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(bn1_(conv1_(x)));
  h = bn2_(conv2_(h));
  return torch::relu(h + (proj_ ? proj_bn_(proj_(x)) : x));
}

ClassifierNetImpl::ClassifierNetImpl(const ClassifierConfig& cfg) {
  require(cfg.stages >= 1 && cfg.base_channels > 0, ErrorKind::kInvalidArgument, "invalid classifier sizes");
  const int c = cfg.base_channels;
  stem_ = register_module("stem", nn::Conv2d(nn::Conv2dOptions(1, c, 3).padding(1).bias(false)));
  stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(c));
  blocks_ = register_module("blocks", nn::Sequential());
  int ch = c;
  for (int s = 0; s < cfg.stages; ++s) {
    const int out = c << s;
    blocks_->push_back(BasicBlock(ch, out, s == 0 ? 1 : 2));
    blocks_->push_back(BasicBlock(out, out, 1));
    ch = out;
  }
  feature_dim_ = ch;
  head_ = register_module("head", nn::Linear(ch, cfg.alphabet.size()));
}

torch::Tensor ClassifierNetImpl::features(const torch::Tensor& x) {
  auto h = torch::relu(stem_bn_(stem_(x)));
  h = blocks_->forward(h);
  return h.mean({2, 3});
}

std::vector<int> argmax_lowest(const torch::Tensor& logits) {
  auto l = logits.detach().to(torch::kFloat64).contiguous();
  require(l.dim() == 2 && l.size(1) > 0, ErrorKind::kShapeMismatch, "logits must be [N,K]");
  const int64_t n = l.size(0), k = l.size(1);
  const double* p = l.data_ptr<double>();
  std::vector<int> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (p[i * k + j] > p[i * k + best]) best = static_cast<int>(j);
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

Classifier::Classifier(ClassifierConfig cfg, ClassifierNet net, json training)
    : cfg_(std::move(cfg)), net_(std::move(net)), training_(std::move(training)) {
  net_->eval();
}

TensorStore Classifier::to_store() const {
  TensorStore store;
  export_module(*net_.ptr(), "clf.", store);
  store.metadata = {{"kind", "classifier"},       {"config", cfg_.to_json()},
                    {"alphabet", cfg_.alphabet.letters()}, {"canvas_side", cfg_.canvas_side},
                    {"training", training_}};
  return store;
}

void Classifier::save(const std::filesystem::path& path) const {
  auto store = to_store();
  store.metadata["created_at"] = utc_timestamp();
  save_tensor_store(path, store);
}

std::string Classifier::hash() const { return content_hash(to_store()); }

Classifier Classifier::load(const std::filesystem::path& path) {
  auto store = load_tensor_store(path);
  require(store.metadata.value("kind", "") == "classifier", ErrorKind::kDecodeFailure,
          path.string() + " is not a classifier checkpoint");
  auto cfg = ClassifierConfig::from_json(store.metadata.at("config"));
  ClassifierNet net(cfg);
  import_module(*net.ptr(), "clf.", store);
  return Classifier(cfg, net, store.metadata.value("training", json::object()));
}

torch::Tensor Classifier::logits(const torch::Tensor& ink) const {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < ink.size(0); i += 256) {
    out.push_back(net_.ptr()->forward(ink.slice(0, i, std::min(ink.size(0), i + 256)).to(torch::kFloat32)));
  }
  if (out.empty()) return torch::zeros({0, cfg_.alphabet.size()});
  return torch::cat(out, 0);
}

torch::Tensor Classifier::features(const torch::Tensor& ink) const {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < ink.size(0); i += 256) {
    out.push_back(net_.ptr()->features(ink.slice(0, i, std::min(ink.size(0), i + 256)).to(torch::kFloat32)));
  }
  if (out.empty()) return torch::zeros({0, net_->feature_dim()});
  return torch::cat(out, 0);
}

torch::Tensor stack_images(const std::vector<GlyphImage>& images, int side) {
  std::vector<torch::Tensor> ts;
  for (const auto& img : images) {
    require(img.side() == side, ErrorKind::kShapeMismatch,
            "image side " + std::to_string(img.side()) + " differs from expected " + std::to_string(side));
    ts.push_back(to_tensor(img));
  }
  if (ts.empty()) return torch::zeros({0, 1, side, side});
  return torch::stack(ts, 0);
}

std::vector<int> Classifier::predict(const std::vector<GlyphImage>& images) const {
  return argmax_lowest(logits(stack_images(images, cfg_.canvas_side)));
}

namespace {

double dataset_accuracy(const Classifier& clf, const GlyphDataset& data) {
  std::vector<int64_t> idx(static_cast<size_t>(data.size()));
  for (int64_t i = 0; i < data.size(); ++i) idx[static_cast<size_t>(i)] = i;
  const auto pred = argmax_lowest(clf.logits(data.images_tensor(idx)));
  int64_t hits = 0;
  for (int64_t i = 0; i < data.size(); ++i) hits += pred[static_cast<size_t>(i)] == data.label(i);
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

ClassifierTrainResult train_classifier(const Manifest& train, const Manifest& heldout,
                                       const ClassifierTrainConfig& cfg) {
  require(!train.records.empty() && !heldout.records.empty(), ErrorKind::kEmptyCorpus,
          "classifier needs training and held-out fonts");
  require(cfg.epochs > 0 && cfg.batch_size > 0, ErrorKind::kInvalidArgument, "invalid classifier schedule");
  ClassifierConfig mcfg = cfg.model;
  mcfg.alphabet = train.alphabet;
  mcfg.canvas_side = train.canvas_side;
  GlyphDataset data(train);
  GlyphDataset held(heldout);

  torch::manual_seed(derive_seed(cfg.seed, "init"));
  ClassifierNet net(mcfg);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
  BatchStream stream(data.size(), cfg.batch_size, derive_seed(cfg.seed, "clf-data"));
  const int64_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;

  ClassifierTrainResult result{Classifier(mcfg, net), {}, {}};
  double best = -1.0;
  TensorStore best_weights;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    net->train();
    for (int64_t s = 0; s < per_epoch; ++s, ++step) {
      const auto idx = stream.batch(step);
      Rng aug(derive_seed(cfg.seed, "clf-augment", static_cast<uint64_t>(step)));
      auto x = data.images_tensor(idx, &aug, cfg.augment);
      auto y = data.labels_tensor(idx);
      auto loss = torch::cross_entropy_loss(net->forward(x), y);
      const double lv = loss.item<double>();
      require(std::isfinite(lv), ErrorKind::kDivergence, "classifier loss became non-finite");
      opt.zero_grad();
      loss.backward();
      opt.step();
      result.train_loss.push_back(lv);
    }
    net->eval();
    const double acc = dataset_accuracy(Classifier(mcfg, net), held);
    result.heldout_accuracy.push_back(acc);
    log_info("classifier epoch " + std::to_string(epoch + 1) + " held-out accuracy " + std::to_string(acc));
    if (acc > best) {
      best = acc;
      best_weights = TensorStore{};
      export_module(*net, "", best_weights);
    }
  }
  import_module(*net, "", best_weights);
  json meta = {{"seed", cfg.seed},
               {"epochs", cfg.epochs},
               {"batch_size", cfg.batch_size},
               {"lr", cfg.lr},
               {"heldout_accuracy", best},
               {"heldout_curve", result.heldout_accuracy},
               {"heldout_fonts", static_cast<int64_t>(heldout.records.size())}};
  result.classifier = Classifier(mcfg, net, meta);
  return result;
}

double recognition_accuracy(const std::vector<GlyphImage>& images, const std::vector<int>& labels,
                            const Classifier& clf) {
  require(images.size() == labels.size(), ErrorKind::kShapeMismatch, "images and labels differ in count");
  require(!images.empty(), ErrorKind::kInvalidArgument, "no images to classify");
  const auto pred = clf.predict(images);
  int64_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

FeatureSet FeatureSet::from_tensor(const torch::Tensor& t, std::string source) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  require(c.dim() == 2, ErrorKind::kShapeMismatch, "features must be [n,m]");
  FeatureSet fs;
  fs.n = c.size(0);
  fs.m = c.size(1);
  fs.data.assign(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
  for (double v : fs.data) require(std::isfinite(v), ErrorKind::kInvalidArgument, "non-finite feature");
  fs.source = std::move(source);
  return fs;
}

FeatureSet embed_features(const std::vector<GlyphImage>& images, const Classifier& clf, std::string source) {
  return FeatureSet::from_tensor(clf.features(stack_images(images, clf.config().canvas_side)), std::move(source));
}

double squared_distance(const double* a, const double* b, int64_t m) {
  double s = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<double> knn_radii(const FeatureSet& set, int k) {
  require(k >= 1, ErrorKind::kInvalidArgument, "k must be positive");
  require(set.n > k, ErrorKind::kTooFewPoints,
          "need more than k=" + std::to_string(k) + " points, got " + std::to_string(set.n));
  std::vector<double> radii(static_cast<size_t>(set.n));
  std::vector<double> d;
  for (int64_t i = 0; i < set.n; ++i) {
    d.clear();
    for (int64_t j = 0; j < set.n; ++j) {
      if (j != i) d.push_back(squared_distance(set.row(i), set.row(j), set.m));
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    radii[static_cast<size_t>(i)] = d[static_cast<size_t>(k - 1)];
  }
  return radii;
}

namespace {

double coverage(const FeatureSet& manifold, const std::vector<double>& radii, const FeatureSet& probe) {
  int64_t inside = 0;
  for (int64_t i = 0; i < probe.n; ++i) {
    for (int64_t j = 0; j < manifold.n; ++j) {
      if (squared_distance(probe.row(i), manifold.row(j), probe.m) <= radii[static_cast<size_t>(j)]) {
        ++inside;
        break;
      }
    }
  }
  return static_cast<double>(inside) / static_cast<double>(probe.n);
}

}  // namespace

PrecisionRecall improved_precision_recall(const FeatureSet& real, const FeatureSet& gen, int k) {
  require(real.m == gen.m, ErrorKind::kDimensionMismatch, "feature sets differ in dimension");
  const auto real_radii = knn_radii(real, k);
  const auto gen_radii = knn_radii(gen, k);
  return {coverage(real, real_radii, gen), coverage(gen, gen_radii, real)};
}

std::string category_pair_label(FontCategory c) {
  switch (c) {
    case FontCategory::kSerif: return "S-S";
    case FontCategory::kSansSerif: return "SS-SS";
    case FontCategory::kHandwriting: return "H-H";
    case FontCategory::kDisplay: return "D-D";
    case FontCategory::kUnknown: return "U-U";
  }
  return "U-U";
}

std::vector<WeightTriple> find_weight_triples(const Manifest& manifest) {
  std::map<std::string, WeightTriple> by_family;
  std::map<std::string, int> seen;
  for (const auto& rec : manifest.records) {
    auto& t = by_family[rec.family];
    t.family = rec.family;
    t.category = rec.category;
    if (rec.weight == FontWeight::kLight) t.light = rec, seen[rec.family] |= 1;
    if (rec.weight == FontWeight::kMedium) t.medium = rec, seen[rec.family] |= 2;
    if (rec.weight == FontWeight::kBold) t.bold = rec, seen[rec.family] |= 4;
  }
  std::vector<WeightTriple> out;
  for (auto& [family, t] : by_family) {
    if (seen[family] == 7) out.push_back(std::move(t));
  }
  return out;
}

TripleMse weight_triple_mse(const std::vector<WeightTriple>& triples, const Manifest& manifest,
                            const std::string& letters, const TripleInterpolator& interp) {
  TripleMse out;
  std::map<std::string, double> sums;
  double total = 0.0;
  for (const auto& t : triples) {
    const bool complete = !t.light.font_id.empty() && !t.medium.font_id.empty() && !t.bold.font_id.empty();
    require(complete, ErrorKind::kIncompleteTriple, "family " + t.family + " lacks a weight");
    require(t.light.family == t.family && t.medium.family == t.family && t.bold.family == t.family,
            ErrorKind::kIncompleteTriple, "triple " + t.family + " mixes families");
    require(t.light.weight == FontWeight::kLight && t.medium.weight == FontWeight::kMedium &&
                t.bold.weight == FontWeight::kBold,
            ErrorKind::kIncompleteTriple, "triple " + t.family + " has mislabelled weights");
    const auto label = category_pair_label(t.category);
    for (char letter : letters) {
      const auto c = manifest.alphabet.char_class(letter);
      const auto light = manifest.load_glyph(t.light, letter);
      const auto bold = manifest.load_glyph(t.bold, letter);
      const auto medium = manifest.load_glyph(t.medium, letter);
      const double e = mse(interp(light, bold, c), medium);
      sums[label] += e;
      out.counts[label] += 1;
      total += e;
      out.images += 1;
    }
  }
  for (const auto& [label, s] : sums) out.per_category[label] = s / static_cast<double>(out.counts[label]);
  out.average = out.images > 0 ? total / static_cast<double>(out.images) : 0.0;
  return out;
}

json MetricReport::to_json() const {
  json j = json::object();
  j["accuracy"] = accuracy ? json(*accuracy) : json(nullptr);
  j["precision"] = pr ? json(pr->precision) : json(nullptr);
  j["recall"] = pr ? json(pr->recall) : json(nullptr);
  j["k"] = k;
  j["feature_space"] = feature_space;
  j["mse"] = mse;
  j["counts"] = counts;
  j["config"] = config;
  return j;
}

}  // namespace glyphfusion
