#include "glyphfusion/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "glyphfusion/checkpoint.hpp"
#include "glyphfusion/config.hpp"
#include "glyphfusion/dataset.hpp"
#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/evaluation.hpp"
#include "glyphfusion/interpolation.hpp"
#include "glyphfusion/png_io.hpp"
#include "glyphfusion/random.hpp"
#include "glyphfusion/style_encoder.hpp"
#include "glyphfusion/toy_corpus.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace glyphfusion {

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".glyphfusion.lock") {
  fs::create_directories(dir);
  fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  require(fd_ >= 0, ErrorKind::kLocked,
          dir.string() + " is in use by another invocation (remove " + path_.filename().string() + " if stale)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

std::string output_hash(const fs::path& path) {
  if (path.extension() == ".ckpt") return "content:" + content_hash(path);
  return git_blob_hash(path);
}

std::string image_set_hash(const std::vector<LabeledImage>& images) {
  std::string listing;
  for (const auto& li : images) listing += li.rel_path + '\t' + li.hash + '\n';
  return sha256_hex(listing);
}

std::vector<LabeledImage> load_image_dir(const fs::path& dir, const Alphabet& alphabet, int side) {
  require(fs::is_directory(dir), ErrorKind::kIo, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledImage> out;
  for (const auto& f : files) {
    LabeledImage li;
    li.rel_path = fs::relative(f, dir).generic_string();
    li.image = load_glyph_png(f);
    li.hash = git_blob_hash(f);
    require(li.image.side() == side, ErrorKind::kShapeMismatch,
            f.string() + " is not " + std::to_string(side) + "x" + std::to_string(side));
    const std::string stem = f.stem().string();
    if (!stem.empty() && alphabet.contains(stem[0]) && (stem.size() == 1 || stem[1] == '_')) {
      li.label = alphabet.index_of(stem[0]);
    }
    out.push_back(std::move(li));
  }
  return out;
}

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string output_dir;
  std::optional<int64_t> seed;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "key = value config file");
  sub->add_option("--set", f.sets, "override a config key (key=value), repeatable");
  sub->add_option("--output-dir", f.output_dir, "experiment directory (config key output_dir)");
  sub->add_option("--seed", f.seed, "global seed (config key seed)");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config.empty()) cfg.load_file(f.config);
  cfg.load_env();
  for (const auto& s : f.sets) cfg.set_assignment(s, "cli");
  if (!f.output_dir.empty()) cfg.set("output_dir", f.output_dir, "cli");
  if (f.seed) cfg.set("seed", std::to_string(*f.seed), "cli");
  return cfg;
}

class Session {
 public:
  Session(std::string command, std::vector<std::string> argv, ExperimentConfig cfg)
      : command_(std::move(command)), argv_(std::move(argv)), cfg_(std::move(cfg)),
        start_(std::chrono::steady_clock::now()), started_at_(utc_timestamp()) {
    torch::set_num_threads(static_cast<int>(std::max<int64_t>(1, cfg_.get_int("threads"))));
    lock_ = std::make_unique<DirectoryLock>(cfg_.output_dir());
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  fs::path out_dir() const { return cfg_.output_dir(); }

  void add_input(const std::string& name, const fs::path& path) { inputs_[name] = output_hash(path); }
  void add_input_hash(const std::string& name, const std::string& hash) { inputs_[name] = hash; }
  void add_output(const fs::path& path) { outputs_.push_back(path); }
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void finish(const std::string& status, const std::string& error = "") {
    json outs = json::object();
    const auto base = fs::weakly_canonical(out_dir());
    for (const auto& p : outputs_) {
      const auto canon = fs::weakly_canonical(p);
      auto rel = fs::relative(canon, base).generic_string();
      const std::string key = rel.starts_with("..") ? canon.generic_string() : rel;
      outs[key] = fs::exists(p) ? output_hash(p) : "missing";
    }
    json sources = json::object();
    for (const auto& k : config_keys()) {
      if (cfg_.source(k.name) != "default") sources[k.name] = cfg_.source(k.name);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json rec = {{"command", command_},      {"argv", argv_},       {"status", status},
                {"config", cfg_.to_json()}, {"config_sources", sources}, {"inputs", inputs_},
                {"outputs", outs},          {"started_at", started_at_}, {"wall_time_s", wall}};
    if (!error.empty()) rec["error"] = error;
    if (!extra_.empty()) rec["details"] = extra_;
    std::ofstream log(out_dir() / "runs.jsonl", std::ios::app);
    log << rec.dump() << "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  ExperimentConfig cfg_;
  std::unique_ptr<DirectoryLock> lock_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
  json inputs_ = json::object();
  json extra_ = json::object();
  std::vector<fs::path> outputs_;
};

struct Splits {
  Manifest train, val, test;
};

Splits load_splits(Session& s) {
  const auto dir = s.cfg().manifest_dir();
  const auto meta_path = dir / "dataset.json";
  require(fs::exists(meta_path), ErrorKind::kMissingPrerequisite,
          "no prepared dataset in " + dir.string() + " (run prepare-data first)");
  std::ifstream in(meta_path);
  const json meta = json::parse(in);
  const Alphabet alphabet(meta.at("alphabet").get<std::string>());
  const int side = meta.at("canvas_side").get<int>();
  require(alphabet == s.cfg().alphabet() && side == s.cfg().get_int("canvas_side"), ErrorKind::kConfig,
          "prepared dataset (" + alphabet.letters() + ", " + std::to_string(side) +
              "px) disagrees with the config alphabet/canvas_side");
  Splits out{read_manifest_jsonl(dir / "train.jsonl", alphabet, side), read_manifest_jsonl(dir / "val.jsonl", alphabet, side),
             read_manifest_jsonl(dir / "test.jsonl", alphabet, side)};
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl"}) s.add_input(name, dir / name);
  return out;
}

StyleEncoder load_encoder(Session& s) {
  const auto path = s.cfg().fannet_checkpoint();
  require(fs::exists(path), ErrorKind::kMissingPrerequisite,
          "FANnet checkpoint " + path.string() + " not found (run train-fannet first)");
  auto enc = StyleEncoder::load(path);
  s.add_input_hash("fannet", enc.hash());
  return enc;
}

DiffusionModel load_diffusion(Session& s, const StyleEncoder& enc) {
  const auto path = s.cfg().diffusion_checkpoint();
  require(fs::exists(path), ErrorKind::kMissingPrerequisite,
          "diffusion checkpoint " + path.string() + " not found (run train-diffusion first)");
  auto model = DiffusionModel::load(path);
  model.check_encoder(enc, s.cfg().get_bool("allow_encoder_mismatch"));
  s.add_input_hash("diffusion", model.hash());
  return model;
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::string text = header + "\n";
  for (const auto& r : rows) text += r + "\n";
  write_text_atomic(path, text);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

// ---- commands ----

void cmd_make_toy_corpus(Session& s, const fs::path& out, int synth) {
  ToyCorpusOptions o;
  o.canvas_side = static_cast<int>(s.cfg().get_int("canvas_side"));
  o.alphabet = s.cfg().alphabet();
  o.synth_families = synth;
  const auto fonts = discover_fonts(font_search_dirs());
  require(!fonts.empty(), ErrorKind::kEmptyCorpus, "no .ttf fonts found (set GLYPHFUSION_FONT_DIRS)");
  auto summary = make_toy_corpus(out, fonts, o);
  require(!summary.fonts.empty(), ErrorKind::kEmptyCorpus, "no font covers the alphabet");
  log_info("toy corpus: " + std::to_string(summary.fonts.size()) + " fonts in " + out.string());
  s.note("fonts", summary.fonts);
  s.add_output(out / "fontinfo.csv");
}

void cmd_prepare(Session& s) {
  const auto& cfg = s.cfg();
  const fs::path root = cfg.get_path("data_root");
  require(!root.empty(), ErrorKind::kConfig, "data_root is not set");
  require(fs::is_directory(root), ErrorKind::kIo, "data_root " + root.string() + " is not a directory");
  ManifestOptions mo;
  mo.alphabet = cfg.alphabet();
  mo.canvas_side = static_cast<int>(cfg.get_int("canvas_side"));
  mo.glyph_dir = cfg.output_dir() / "glyphs";
  auto build = build_manifest(root, mo);
  const auto r = cfg.get_list("split_ratios");
  require(r.size() == 3, ErrorKind::kConfig, "split_ratios needs three values");
  auto splits = split_fonts(build.manifest, {r[0], r[1], r[2]}, static_cast<uint64_t>(cfg.get_int("split_seed")));
  const auto dir = cfg.manifest_dir();
  const char* names[3] = {"train.jsonl", "val.jsonl", "test.jsonl"};
  for (int i = 0; i < 3; ++i) {
    write_manifest_jsonl(dir / names[i], splits[static_cast<size_t>(i)]);
    s.add_output(dir / names[i]);
  }
  json excluded = json::array();
  for (const auto& e : build.excluded) excluded.push_back({{"font_id", e.font_id}, {"reason", e.reason}});
  json meta = {{"alphabet", mo.alphabet.letters()},
               {"canvas_side", mo.canvas_side},
               {"split_ratios", r},
               {"split_seed", cfg.get_int("split_seed")},
               {"counts", {{"train", splits[0].records.size()}, {"val", splits[1].records.size()},
                           {"test", splits[2].records.size()}}},
               {"excluded", excluded}};
  write_text_atomic(dir / "dataset.json", meta.dump(2) + "\n");
  s.add_output(dir / "dataset.json");
}

void cmd_train_fannet(Session& s) {
  auto splits = load_splits(s);
  auto tc = s.cfg().fannet_train();
  auto result = train_fannet(splits.train, splits.val, tc);
  const auto ckpt = s.cfg().fannet_checkpoint();
  result.encoder.save(ckpt);
  std::map<int, double> val(result.val_loss.begin(), result.val_loss.end());
  std::vector<std::string> rows;
  for (size_t i = 0; i < result.train_loss.size(); ++i) {
    const int step = static_cast<int>(i) + 1;
    rows.push_back(std::to_string(step) + "," + fmt(result.train_loss[i]) + "," +
                   (val.count(step) ? fmt(val[step]) : std::string()));
  }
  const auto csv = s.out_dir() / "fannet_loss.csv";
  write_csv(csv, "step,train_loss,val_loss", rows);
  s.add_output(ckpt);
  s.add_output(csv);
  s.note("best_step", result.best_step);
}

std::vector<std::string> read_loss_rows(const fs::path& csv, int64_t up_to) {
  std::vector<std::string> rows;
  std::ifstream in(csv);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= up_to) rows.push_back(line);
  }
  return rows;
}

void cmd_train_diffusion(Session& s, bool resume) {
  const auto fannet_path = s.cfg().fannet_checkpoint();
  require(fs::exists(fannet_path), ErrorKind::kMissingPrerequisite,
          "train-diffusion needs a FANnet checkpoint; " + fannet_path.string() + " not found (run train-fannet)");
  auto splits = load_splits(s);
  auto enc = load_encoder(s);
  const auto ckpt = s.cfg().diffusion_checkpoint();
  const auto csv = s.out_dir() / "diffusion_loss.csv";
  const auto mcfg = s.cfg().diffusion();
  const auto tc = s.cfg().diffusion_train();
  std::optional<DiffusionModel> model;
  std::vector<std::string> rows;
  if (resume && fs::exists(ckpt)) {
    model.emplace(DiffusionModel::load(ckpt));
    require(model->config().to_json() == mcfg.to_json(), ErrorKind::kConfig,
            "checkpoint settings differ from the config; cannot resume");
    model->check_encoder(enc, s.cfg().get_bool("allow_encoder_mismatch"));
    rows = read_loss_rows(csv, model->step());
    log_info("resuming diffusion training at step " + std::to_string(model->step()));
  } else {
    model.emplace(mcfg, enc.hash(), tc.seed);
  }
  s.note("start_step", model->step());
  const auto prior = rows;
  train_diffusion(*model, splits.train, enc, tc, [&](const DiffusionModel& m, const std::vector<double>& loss) {
    rows = prior;
    const int64_t first = m.step() - static_cast<int64_t>(loss.size());
    for (size_t i = 0; i < loss.size(); ++i) {
      rows.push_back(std::to_string(first + static_cast<int64_t>(i) + 1) + "," + fmt(loss[i]));
    }
    m.save(ckpt);
    write_csv(csv, "step,loss", rows);
  });
  s.add_output(ckpt);
  s.add_output(csv);
  s.note("end_step", model->step());
}

void cmd_train_classifier(Session& s) {
  auto splits = load_splits(s);
  auto result = train_classifier(splits.train, splits.val, s.cfg().classifier_train());
  GlyphDataset test(splits.test);
  std::vector<GlyphImage> images;
  std::vector<int> labels;
  for (int64_t i = 0; i < test.size(); ++i) {
    images.push_back(test.image(i));
    labels.push_back(test.label(i));
  }
  const double acc = recognition_accuracy(images, labels, result.classifier);
  result.classifier.annotate("test_accuracy", acc);
  log_info("classifier test accuracy " + std::to_string(acc));
  const auto ckpt = s.cfg().classifier_checkpoint();
  result.classifier.save(ckpt);
  std::vector<std::string> rows;
  for (size_t i = 0; i < result.train_loss.size(); ++i) rows.push_back(std::to_string(i + 1) + "," + fmt(result.train_loss[i]));
  const auto csv = s.out_dir() / "classifier_loss.csv";
  write_csv(csv, "step,loss", rows);
  s.add_output(ckpt);
  s.add_output(csv);
  s.note("test_accuracy", acc);
}

struct RequestFlags {
  std::string approach = "cond";
  std::string ref1, ref2, style_ref;
  std::string letter;
  double lambda = 0.5;
  std::optional<double> w;
  std::optional<int> t_prime;
  std::string out;
  int steps = 0;
  int n = 1;
};

CharClass parse_letter(const ExperimentConfig& cfg, const std::string& letter) {
  require(letter.size() == 1, ErrorKind::kInvalidArgument, "--letter takes a single character");
  const auto alphabet = cfg.alphabet();
  require(alphabet.contains(letter[0]), ErrorKind::kInvalidArgument, "letter '" + letter + "' is not in the alphabet");
  return alphabet.char_class(letter[0]);
}

InterpolationRequest make_request(Session& s, const RequestFlags& f) {
  InterpolationRequest req;
  req.approach = parse_approach(f.approach);
  req.r1 = load_glyph_png(f.ref1);
  req.r2 = load_glyph_png(f.ref2);
  s.add_input("ref1", f.ref1);
  s.add_input("ref2", f.ref2);
  req.c = parse_letter(s.cfg(), f.letter);
  req.lambda = f.lambda;
  req.w = s.cfg().get_double("w");
  req.seed = derive_seed(s.cfg().seed(), "sampling");
  const auto tp = s.cfg().get_int("t_prime");
  if (tp >= 0) req.t_prime = static_cast<int>(tp);
  return req;
}

void cmd_sample(Session& s, const RequestFlags& f) {
  auto enc = load_encoder(s);
  auto model = load_diffusion(s, enc);
  const auto c = parse_letter(s.cfg(), f.letter);
  StyleCond style;
  if (!f.style_ref.empty()) {
    style = enc.encode(load_glyph_png(f.style_ref));
    s.add_input("style_ref", f.style_ref);
  }
  const double w = s.cfg().get_double("w");
  require(f.n >= 1, ErrorKind::kInvalidArgument, "--n must be positive");
  std::vector<GlyphImage> images;
  for (int i = 0; i < f.n; ++i) {
    images.push_back(model.sample(c, style, w, derive_seed(s.cfg().seed(), "sampling", static_cast<uint64_t>(i))));
  }
  const fs::path out(f.out);
  if (images.size() == 1) {
    save_glyph_png(out, images[0]);
  } else {
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(images.size()))));
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    write_png(out, mosaic(images, cols));
  }
  json side = {{"letter", std::string(1, c.letter)}, {"w", w}, {"n", f.n}, {"seed", s.cfg().seed()},
               {"fannet_hash", enc.hash()}, {"diffusion_hash", model.hash()}};
  if (!f.style_ref.empty()) side["style_ref_hash"] = output_hash(f.style_ref);
  write_text_atomic(out.string() + ".json", side.dump(2) + "\n");
  s.add_output(out);
  s.add_output(out.string() + ".json");
}

void cmd_interpolate(Session& s, const RequestFlags& f) {
  auto req = make_request(s, f);
  auto enc = load_encoder(s);
  std::optional<DiffusionModel> model;
  if (req.approach != Approach::kFannetBaseline) model.emplace(load_diffusion(s, enc));
  const auto img = interpolate(req, enc, model ? &*model : nullptr);
  const fs::path out(f.out);
  save_glyph_png(out, img);
  json side = req.to_json();
  side["fannet_hash"] = enc.hash();
  if (model) side["diffusion_hash"] = model->hash();
  write_text_atomic(out.string() + ".json", side.dump(2) + "\n");
  s.add_output(out);
  s.add_output(out.string() + ".json");
}

void cmd_sweep(Session& s, const RequestFlags& f) {
  auto req = make_request(s, f);
  auto enc = load_encoder(s);
  std::optional<DiffusionModel> model;
  if (req.approach != Approach::kFannetBaseline) model.emplace(load_diffusion(s, enc));
  const int n = f.steps > 0 ? f.steps : static_cast<int>(s.cfg().get_int("sweep_steps"));
  const auto lambdas = sweep_lambdas(n);
  const auto images = lambda_sweep(req, n, enc, model ? &*model : nullptr);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  json entries = json::array();
  for (size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "lambda_%03zu.png", i);
    save_glyph_png(dir / name, images[i]);
    s.add_output(dir / name);
    entries.push_back({{"file", name}, {"lambda", lambdas[i]}});
  }
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  write_png(dir / "mosaic.png", mosaic(images, cols));
  s.add_output(dir / "mosaic.png");
  json side = req.to_json();
  side.erase("lambda");
  side["steps"] = n;
  side["mosaic_columns"] = cols;
  side["images"] = entries;
  side["fannet_hash"] = enc.hash();
  if (model) side["diffusion_hash"] = model->hash();
  write_text_atomic(dir / "sweep.json", side.dump(2) + "\n");
  s.add_output(dir / "sweep.json");
}

struct EvalFlags {
  std::string real, gen, clf, out, triples, letters;
  int k = 3;
};

void cmd_evaluate(Session& s, const EvalFlags& f) {
  const auto& cfg = s.cfg();
  MetricReport report;
  report.k = f.k;
  report.config = {{"k", f.k}};
  const auto alphabet = cfg.alphabet();
  const int side = static_cast<int>(cfg.get_int("canvas_side"));
  std::optional<Classifier> clf;
  const fs::path clf_path = f.clf.empty() ? cfg.classifier_checkpoint() : fs::path(f.clf);
  if (fs::exists(clf_path)) {
    clf.emplace(Classifier::load(clf_path));
    s.add_input_hash("classifier", clf->hash());
  }

  if (!f.real.empty() || !f.gen.empty()) {
    require(!f.real.empty() && !f.gen.empty(), ErrorKind::kInvalidArgument, "--real and --gen go together");
    const auto real = load_image_dir(f.real, alphabet, side);
    const auto gen = load_image_dir(f.gen, alphabet, side);
    report.config["real"] = image_set_hash(real);
    report.config["gen"] = image_set_hash(gen);
    s.add_input_hash("real", report.config["real"]);
    s.add_input_hash("gen", report.config["gen"]);
    report.counts["real"] = static_cast<int64_t>(real.size());
    report.counts["generated"] = static_cast<int64_t>(gen.size());

    std::map<std::string, const GlyphImage*> by_path;
    for (const auto& r : real) by_path[r.rel_path] = &r.image;
    double sum = 0.0;
    int64_t paired = 0;
    for (const auto& g : gen) {
      auto it = by_path.find(g.rel_path);
      if (it == by_path.end()) continue;
      sum += mse(g.image, *it->second);
      ++paired;
    }
    report.counts["paired"] = paired;
    if (paired > 0) report.mse["paired"] = sum / static_cast<double>(paired);

    if (clf) {
      std::vector<GlyphImage> imgs;
      std::vector<int> labels;
      for (const auto& g : gen) {
        if (g.label) {
          imgs.push_back(g.image);
          labels.push_back(*g.label);
        }
      }
      report.counts["labeled"] = static_cast<int64_t>(imgs.size());
      if (!imgs.empty()) report.accuracy = recognition_accuracy(imgs, labels, *clf);
      if (static_cast<int>(real.size()) > f.k && static_cast<int>(gen.size()) > f.k) {
        std::vector<GlyphImage> ri, gi;
        for (const auto& r : real) ri.push_back(r.image);
        for (const auto& g : gen) gi.push_back(g.image);
        report.pr = improved_precision_recall(embed_features(ri, *clf, "real"), embed_features(gi, *clf, "generated"), f.k);
      }
    } else {
      log_warn("no classifier checkpoint; accuracy and precision/recall skipped");
    }
  }

  if (!f.triples.empty()) {
    const auto approach = parse_approach(f.triples);
    auto splits = load_splits(s);
    Manifest all = splits.train;
    for (const auto* m : {&splits.val, &splits.test}) {
      for (const auto& r : m->records) all.records.push_back(r);
    }
    auto enc = load_encoder(s);
    std::optional<DiffusionModel> model;
    if (approach != Approach::kFannetBaseline) model.emplace(load_diffusion(s, enc));
    const uint64_t seed = derive_seed(cfg.seed(), "sampling");
    const double w = cfg.get_double("w");
    const auto tp = cfg.get_int("t_prime");
    const auto triples = find_weight_triples(all);
    require(!triples.empty(), ErrorKind::kIncompleteTriple, "no light/medium/bold family in the dataset");
    auto result = weight_triple_mse(triples, all, f.letters.empty() ? alphabet.letters() : f.letters,
                                    [&](const GlyphImage& light, const GlyphImage& bold, const CharClass& c) {
                                      InterpolationRequest req;
                                      req.approach = approach;
                                      req.r1 = light;
                                      req.r2 = bold;
                                      req.c = c;
                                      req.lambda = 0.5;
                                      req.w = w;
                                      req.seed = seed;
                                      if (tp >= 0) req.t_prime = static_cast<int>(tp);
                                      return interpolate(req, enc, model ? &*model : nullptr);
                                    });
    for (const auto& [k, v] : result.per_category) report.mse[k] = v;
    report.mse["average"] = result.average;
    for (const auto& [k, v] : result.counts) report.counts["triple_" + k] = v;
    report.config["triples"] = f.triples;
  }
  const fs::path out = f.out.empty() ? s.out_dir() / "report.json" : fs::path(f.out);
  write_text_atomic(out, report.to_json().dump(2) + "\n");
  s.add_output(out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"glyphfusion: font style interpolation with a conditional diffusion model"};
  app.require_subcommand(1);
  CommonFlags common;
  RequestFlags req;
  EvalFlags ev;
  bool resume = false;
  std::string toy_out;
  int synth = 4;
  std::string data_root;

  auto* toy = app.add_subcommand("make-toy-corpus", "rasterise installed fonts into a glyph corpus");
  add_common(toy, common);
  toy->add_option("--out", toy_out, "corpus directory")->required();
  toy->add_option("--synth-families", synth, "fonts expanded into light/medium/bold families");

  auto* prep = app.add_subcommand("prepare-data", "build manifests and font splits");
  add_common(prep, common);
  prep->add_option("--data-root", data_root, "corpus directory (config key data_root)");

  auto* tf = app.add_subcommand("train-fannet", "train the style encoder/decoder");
  add_common(tf, common);
  auto* td = app.add_subcommand("train-diffusion", "train the conditional noise predictor");
  add_common(td, common);
  td->add_flag("--resume", resume, "continue from the existing checkpoint");
  auto* tc = app.add_subcommand("train-classifier", "train the recognition classifier");
  add_common(tc, common);

  auto* smp = app.add_subcommand("sample", "conditional sampling");
  add_common(smp, common);
  smp->add_option("--letter", req.letter)->required();
  smp->add_option("--style-ref", req.style_ref, "reference glyph PNG for the style condition");
  smp->add_option("--n", req.n, "number of samples");
  smp->add_option("--w", req.w, "guidance scale");
  smp->add_option("--out", req.out, "output PNG")->required();

  auto add_request = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--approach", req.approach, "image, cond, noise or fannet");
    sub->add_option("--ref1", req.ref1)->required();
    sub->add_option("--ref2", req.ref2)->required();
    sub->add_option("--letter", req.letter)->required();
    sub->add_option("--w", req.w, "guidance scale");
    sub->add_option("--t-prime", req.t_prime, "image-blend restart step");
    sub->add_option("--out", req.out)->required();
  };
  auto* itp = app.add_subcommand("interpolate", "interpolate two reference styles");
  add_request(itp);
  itp->add_option("--lambda", req.lambda, "weight of ref1");
  auto* swp = app.add_subcommand("sweep", "lambda sweep from 0 to 1");
  add_request(swp);
  swp->add_option("--steps", req.steps, "number of lambda values (config key sweep_steps)");

  auto* evl = app.add_subcommand("evaluate", "recognition accuracy, precision/recall and MSE");
  add_common(evl, common);
  evl->add_option("--real", ev.real, "directory of real glyph PNGs");
  evl->add_option("--gen", ev.gen, "directory of generated glyph PNGs");
  evl->add_option("--clf", ev.clf, "classifier checkpoint");
  evl->add_option("--k", ev.k, "nearest-neighbour k for precision/recall");
  evl->add_option("--triples", ev.triples, "also run the light/medium/bold protocol with this approach");
  evl->add_option("--letters", ev.letters, "letters for the triple protocol (default: alphabet)");
  evl->add_option("--out", ev.out, "report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::vector<std::string> args(argv, argv + argc);
  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  std::unique_ptr<Session> session;
  try {
    auto cfg = build_config(common);
    if (!data_root.empty()) cfg.set("data_root", data_root, "cli");
    if (req.w) cfg.set("w", fmt(*req.w), "cli");
    if (req.t_prime) cfg.set("t_prime", std::to_string(*req.t_prime), "cli");
    if (name == "make-toy-corpus" && common.output_dir.empty()) cfg.set("output_dir", toy_out, "cli");
    session = std::make_unique<Session>(name, args, cfg);
    if (name == "make-toy-corpus") cmd_make_toy_corpus(*session, toy_out, synth);
    else if (name == "prepare-data") cmd_prepare(*session);
    else if (name == "train-fannet") cmd_train_fannet(*session);
    else if (name == "train-diffusion") cmd_train_diffusion(*session, resume);
    else if (name == "train-classifier") cmd_train_classifier(*session);
    else if (name == "sample") cmd_sample(*session, req);
    else if (name == "interpolate") cmd_interpolate(*session, req);
    else if (name == "sweep") cmd_sweep(*session, req);
    else if (name == "evaluate") cmd_evaluate(*session, ev);
    session->finish("ok");
    return 0;
  } catch (const Error& e) {
    std::cerr << "glyphfusion " << name << ": " << e.what() << "\n";
    if (session) session->finish("error", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "glyphfusion " << name << ": " << e.what() << "\n";
    if (session) session->finish("error", e.what());
    return 1;
  }
}

}  // namespace glyphfusion
