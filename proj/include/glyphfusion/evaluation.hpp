#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "glyphfusion/checkpoint.hpp"
#include "glyphfusion/dataset.hpp"
#include "glyphfusion/image.hpp"

namespace glyphfusion {

struct ClassifierConfig {
  int canvas_side = 32;
  Alphabet alphabet;
  int base_channels = 32;
  /// Residual stages; each after the first halves the resolution and doubles width.
  int stages = 3;

  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in_ch, int out_ch, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, proj_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, proj_bn_{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Small residual CNN; the pooled output of the last stage is the feature space.
class ClassifierNetImpl : public torch::nn::Module {
 public:
  explicit ClassifierNetImpl(const ClassifierConfig& cfg);
  torch::Tensor features(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x) { return head_(features(x)); }
  int feature_dim() const noexcept { return feature_dim_; }

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::Linear head_{nullptr};
  int feature_dim_ = 0;
};
TORCH_MODULE(ClassifierNet);

/// Index of the largest entry per row; ties go to the lowest index.
std::vector<int> argmax_lowest(const torch::Tensor& logits);

class Classifier {
 public:
  Classifier(ClassifierConfig cfg, ClassifierNet net, nlohmann::json training = nlohmann::json::object());

  static Classifier load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  TensorStore to_store() const;
  std::string hash() const;

  const ClassifierConfig& config() const noexcept { return cfg_; }
  const nlohmann::json& training_metadata() const noexcept { return training_; }
  /// Held-out accuracy recorded at training time.
  double recorded_accuracy() const { return training_.value("heldout_accuracy", 0.0); }
  void annotate(const std::string& key, nlohmann::json value) { training_[key] = std::move(value); }

  /// [N,1,H,W] ink -> [N,K] logits, evaluated in chunks.
  torch::Tensor logits(const torch::Tensor& ink) const;
  /// [N,1,H,W] ink -> [N,m] penultimate activations.
  torch::Tensor features(const torch::Tensor& ink) const;
  std::vector<int> predict(const std::vector<GlyphImage>& images) const;

 private:
  ClassifierConfig cfg_;
  ClassifierNet net_;
  nlohmann::json training_;
};

struct ClassifierTrainConfig {
  ClassifierConfig model;
  int batch_size = 64;
  double lr = 1e-3;
  int epochs = 5;
  uint64_t seed = 0;
  AugmentConfig augment;
};

struct ClassifierTrainResult {
  Classifier classifier;
  std::vector<double> train_loss;
  std::vector<double> heldout_accuracy;
};

/// Cross-entropy training; keeps the epoch with the best held-out accuracy.
ClassifierTrainResult train_classifier(const Manifest& train, const Manifest& heldout,
                                       const ClassifierTrainConfig& cfg);

/// [N,1,H,W] stack of images; kShapeMismatch if sides differ from `side`.
torch::Tensor stack_images(const std::vector<GlyphImage>& images, int side);

/// Share of argmax predictions equal to the labels.
double recognition_accuracy(const std::vector<GlyphImage>& images, const std::vector<int>& labels,
                            const Classifier& clf);

struct FeatureSet {
  /// n x m, row-major.
  std::vector<double> data;
  int64_t n = 0;
  int64_t m = 0;
  std::string source;

  const double* row(int64_t i) const { return data.data() + i * m; }
  static FeatureSet from_tensor(const torch::Tensor& t, std::string source);
};

FeatureSet embed_features(const std::vector<GlyphImage>& images, const Classifier& clf, std::string source);

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
};

/// Sum of squared coordinate differences, accumulated in index order.
double squared_distance(const double* a, const double* b, int64_t m);
/// Squared distance from each point to its k-th nearest other point.
std::vector<double> knn_radii(const FeatureSet& set, int k);
/// Precision: share of generated points inside the real manifold. Recall:
/// share of real points inside the generated manifold. kTooFewPoints unless
/// both sets have more than k points.
PrecisionRecall improved_precision_recall(const FeatureSet& real, const FeatureSet& gen, int k = 3);

struct WeightTriple {
  std::string family;
  FontCategory category = FontCategory::kUnknown;
  FontRecord light;
  FontRecord medium;
  FontRecord bold;
};

/// Groups a manifest's families that carry light, medium and bold members.
std::vector<WeightTriple> find_weight_triples(const Manifest& manifest);

/// "S-S", "SS-SS", "H-H", "D-D", or "U-U" for unknown.
std::string category_pair_label(FontCategory c);

struct TripleMse {
  std::map<std::string, double> per_category;
  std::map<std::string, int64_t> counts;
  double average = 0;
  int64_t images = 0;
};

/// (light glyph, bold glyph, class) -> interpolated glyph at lambda = 0.5.
using TripleInterpolator = std::function<GlyphImage(const GlyphImage&, const GlyphImage&, const CharClass&)>;

/// MSE of interp(light, bold) against the medium glyph per letter, averaged
/// per category and over all images. kIncompleteTriple when a triple mixes
/// families or lacks a weight.
TripleMse weight_triple_mse(const std::vector<WeightTriple>& triples, const Manifest& manifest,
                            const std::string& letters, const TripleInterpolator& interp);

struct MetricReport {
  std::optional<double> accuracy;
  std::optional<PrecisionRecall> pr;
  int k = 3;
  std::string feature_space = "classifier-penultimate";
  std::map<std::string, double> mse;
  std::map<std::string, int64_t> counts;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
};

}  // namespace glyphfusion
