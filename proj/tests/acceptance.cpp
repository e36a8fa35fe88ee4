// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "cli_pipeline.hpp"
#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/evaluation.hpp"
#include "glyphfusion/interpolation.hpp"
#include "glyphfusion/schedule.hpp"
#include "pr_oracle.hpp"
#include "support.hpp"

using namespace glyphfusion;
using namespace gf_test;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double max_abs(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().max().item<double>(); }

double max_abs(const GlyphImage& a, const GlyphImage& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.pixels().size(); ++i)
    m = std::max(m, static_cast<double>(std::abs(a.pixels()[i] - b.pixels()[i])));
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

InterpolationRequest request(Approach a, const GlyphImage& r1, const GlyphImage& r2, const CharClass& c,
                             double lambda, double w, uint64_t seed) {
  InterpolationRequest req;
  req.approach = a;
  req.r1 = r1;
  req.r2 = r2;
  req.c = c;
  req.lambda = lambda;
  req.w = w;
  req.seed = seed;
  return req;
}

// Trained toy artifacts, loaded once on first use.
struct Toy {
  fs::path dir;
  StyleEncoder enc;
  DiffusionModel model;
  Classifier clf;
  Manifest train, val, test;

  Manifest all() const {
    Manifest m = train;
    m.split.reset();
    for (const auto* part : {&val, &test}) m.records.insert(m.records.end(), part->records.begin(), part->records.end());
    return m;
  }
  Manifest heldout() const {
    Manifest m = val;
    m.split.reset();
    m.records.insert(m.records.end(), test.records.begin(), test.records.end());
    return m;
  }
  // A light/bold family, preferring the synthetic weight families.
  WeightTriple weight_pair() const {
    auto triples = find_weight_triples(all());
    require(!triples.empty(), ErrorKind::kIncompleteTriple, "toy corpus has no light/medium/bold family");
    for (const auto& t : triples)
      if (t.family.find("Synth") != std::string::npos) return t;
    return triples.front();
  }
};

class ToyLoader {
 public:
  explicit ToyLoader(fs::path dir) : dir_(std::move(dir)) {}
  const Toy& get() {
    if (!toy_) {
      const auto data = dir_ / "data";
      auto enc = StyleEncoder::load(dir_ / "fannet.ckpt");
      auto model = DiffusionModel::load(dir_ / "diffusion.ckpt");
      auto clf = Classifier::load(dir_ / "classifier.ckpt");
      const Alphabet alpha = model.config().alphabet;
      const int side = model.config().canvas_side;
      toy_.emplace(Toy{dir_, std::move(enc), std::move(model), std::move(clf),
                       read_manifest_jsonl(data / "train.jsonl", alpha, side),
                       read_manifest_jsonl(data / "val.jsonl", alpha, side),
                       read_manifest_jsonl(data / "test.jsonl", alpha, side)});
    }
    return *toy_;
  }

 private:
  fs::path dir_;
  std::optional<Toy> toy_;
};

long double ramp_ld(int t, int T) {
  const long double s = 0.008L;
  const long double c = std::cos(((static_cast<long double>(t) / T + s) / (1.0L + s)) * std::numbers::pi_v<long double> / 2.0L);
  return c * c;
}

Verdict schedule_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  long double worst = 0;
  int bad = 0;
  for (int T : {4, 200, 1000}) {
    const auto s = cosine_schedule(T);
    const long double f0 = ramp_ld(0, T);
    bool clipped = false;
    for (int t = 1; t <= T; ++t) {
      const auto i = static_cast<size_t>(t);
      if (!(s.alpha_bar[i] < s.alpha_bar[i - 1]) || !(s.beta[i] > 0.0) || s.beta[i] > kMaxBeta) ++bad;
      if (s.beta[i] == kMaxBeta) clipped = true;
      if (clipped) continue;
      worst = std::max(worst, std::abs(static_cast<long double>(s.alpha_bar[i]) - ramp_ld(t, T) / f0));
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && worst <= 1e-10L && secs < 1.0,
          "violations=" + std::to_string(bad) + " max_err=" + fmt("%.2e", static_cast<double>(worst)) +
              " time=" + fmt("%.3fs", secs)};
}

Verdict guidance_algebra() {
  auto model = randomized_model(tiny_diffusion_config(20), 101);
  Rng rng(102);
  auto gen = make_generator(103);
  double worst = 0.0;
  int w1_exact = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const int64_t b = 1 + static_cast<int64_t>(uniform_below(rng, 3));
    auto x = torch::randn({b, 1, 16, 16}, gen);
    const int t = 1 + static_cast<int>(uniform_below(rng, 20));
    const auto c = Alphabet().char_class(static_cast<int>(uniform_below(rng, 26)));
    const auto s = random_style(rng, 8);
    const double w = 8.0 * uniform01(rng);
    auto cond = model.predict_noise(x, t, c, s);
    auto uncond = model.predict_noise(x, t, std::nullopt, std::nullopt);
    worst = std::max(worst, max_abs(model.guided_noise(x, t, c, s, w), uncond + w * (cond - uncond)));
    w1_exact += torch::equal(model.guided_noise(x, t, c, s, 1.0), cond) ? 1 : 0;
  }
  return {worst <= 1e-6 && w1_exact == n,
          "max_err=" + fmt("%.2e", worst) + " w1_exact=" + std::to_string(w1_exact) + "/" + std::to_string(n)};
}

Verdict lambda_endpoints(ToyLoader& loader) {
  auto enc = tiny_encoder(201);
  auto model = randomized_model(tiny_diffusion_config(20), 202, enc.hash());
  Rng rng(203);
  double worst = 0.0;
  int checks = 0, sym_fail = 0;

  auto endpoint_checks = [&](const StyleEncoder& e, const DiffusionModel& m, const GlyphImage& r1,
                             const GlyphImage& r2, const CharClass& c, double w, uint64_t seed) {
    const auto s1 = e.encode(r1), s2 = e.encode(r2);
    const auto ref1 = m.sample(c, s1, w, seed), ref0 = m.sample(c, s2, w, seed);
    for (auto a : {Approach::kConditionBlend, Approach::kNoiseBlend}) {
      auto run = [&](double lam) {
        auto req = request(a, r1, r2, c, lam, w, seed);
        return a == Approach::kConditionBlend ? condition_interpolate(req, e, m) : noise_interpolate(req, e, m);
      };
      worst = std::max({worst, max_abs(run(1.0), ref1), max_abs(run(0.0), ref0)});
      checks += 2;
    }
  };

  for (uint64_t seed = 0; seed < 8; ++seed) {
    auto r1 = random_image(rng, 16), r2 = random_image(rng, 16);
    const auto c = Alphabet().char_class(static_cast<int>(uniform_below(rng, 26)));
    endpoint_checks(enc, model, r1, r2, c, 3.0, seed);
    for (double lam : {0.1, 0.25, 0.5, 0.8}) {
      auto fwd = condition_interpolate(request(Approach::kConditionBlend, r1, r2, c, lam, 3.0, seed), enc, model);
      auto rev =
          condition_interpolate(request(Approach::kConditionBlend, r2, r1, c, 1.0 - lam, 3.0, seed), enc, model);
      sym_fail += fwd == rev ? 0 : 1;
    }
  }

  std::string toy_note = " toy=skipped";
  try {
    const auto& toy = loader.get();
    const auto pair = toy.weight_pair();
    const auto c = toy.model.config().alphabet.char_class('G');
    endpoint_checks(toy.enc, toy.model, toy.all().load_glyph(pair.light, 'G'), toy.all().load_glyph(pair.bold, 'G'), c,
                    toy.model.config().w, 5);
    toy_note = " toy=checked";
  } catch (const std::exception& e) {
    toy_note = std::string(" toy=unavailable(") + e.what() + ")";
  }
  return {worst <= 1e-6 && sym_fail == 0, "endpoint_checks=" + std::to_string(checks) +
                                              " max_err=" + fmt("%.2e", worst) +
                                              " symmetry_failures=" + std::to_string(sym_fail) + toy_note};
}

Verdict or_blend_algebra() {
  Rng rng(301);
  const int side = 32;
  const GlyphImage blank(side);
  int fails = 0;
  for (int i = 0; i < 1000; ++i) {
    const bool binary = i % 2 == 0;
    auto a = binary ? random_binary_image(rng, side, uniform01(rng)) : random_image(rng, side);
    auto b = binary ? random_binary_image(rng, side, uniform01(rng)) : random_image(rng, side);
    const auto ab = or_blend(a, b);
    bool ok = ab == or_blend(b, a) && or_blend(a, a) == a && or_blend(a, blank) == a && or_blend(blank, a) == a;
    int64_t union_count = 0, blend_count = 0;
    for (size_t p = 0; p < ab.pixels().size(); ++p) {
      const float va = a.pixels()[p], vb = b.pixels()[p], vab = ab.pixels()[p];
      ok = ok && vab >= va && vab >= vb;
      union_count += (va >= 0.5f || vb >= 0.5f) ? 1 : 0;
      blend_count += vab >= 0.5f ? 1 : 0;
    }
    ok = ok && union_count == blend_count;
    fails += ok ? 0 : 1;
  }
  return {fails == 0, "pairs=1000 failures=" + std::to_string(fails)};
}

Verdict sdedit_boundary(ToyLoader& loader) {
  const auto& toy = loader.get();
  const auto pair = toy.weight_pair();
  const auto all = toy.all();
  const char letter = 'R';
  const auto r1 = all.load_glyph(pair.light, letter), r2 = all.load_glyph(pair.bold, letter);
  const auto rbar = or_blend(r1, r2);
  const int T = toy.model.config().T;
  auto req = request(Approach::kImageBlend, r1, r2, toy.model.config().alphabet.char_class(letter), 0.5,
                     toy.model.config().w, 0);
  req.t_prime = 0;
  const bool identity = sdedit_interpolate(req, toy.model) == rbar;

  auto mean_distance = [&](int t_prime) {
    std::vector<double> mean(rbar.pixels().size(), 0.0);
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
      req.t_prime = t_prime;
      req.seed = static_cast<uint64_t>(s);
      const auto out = sdedit_interpolate(req, toy.model);
      for (size_t p = 0; p < mean.size(); ++p) mean[p] += out.pixels()[p] / seeds;
    }
    double acc = 0.0;
    for (size_t p = 0; p < mean.size(); ++p) acc += (mean[p] - rbar.pixels()[p]) * (mean[p] - rbar.pixels()[p]);
    return std::sqrt(acc / static_cast<double>(mean.size()));
  };
  const double d_full = mean_distance(T), d_half = mean_distance(T / 2);
  return {identity && d_full > d_half, std::string("identity_at_0=") + (identity ? "yes" : "no") +
                                           " rms(T)=" + fmt("%.4f", d_full) + " rms(T/2)=" + fmt("%.4f", d_half) +
                                           " family=" + pair.family};
}

Verdict pr_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(401);
  int mismatches = 0;
  const int ks[3] = {1, 3, 5};
  for (int i = 0; i < 50; ++i) {
    const int k = ks[i % 3];
    const int64_t m = uniform_int(rng, 1, 64);
    const bool lattice = i % 4 == 0;
    auto real = random_features(rng, uniform_int(rng, k + 1, 500), m, 0.0, lattice);
    auto gen = random_features(rng, uniform_int(rng, k + 1, 500), m, uniform01(rng), lattice);
    const auto got = improved_precision_recall(real, gen, k);
    const auto want = brute_force_pr(real, gen, k);
    mismatches += (got.precision == want.precision && got.recall == want.recall) ? 0 : 1;
  }
  auto a = random_features(rng, 200, 16, 0.0, false);
  const auto same = improved_precision_recall(a, a, 3);
  auto far = random_features(rng, 200, 16, 1000.0, false);
  const auto apart = improved_precision_recall(a, far, 3);
  const double secs = seconds_since(t0);
  const bool ok = mismatches == 0 && same.precision == 1.0 && same.recall == 1.0 && apart.precision == 0.0 &&
                  apart.recall == 0.0 && secs < 30.0;
  return {ok, "instances=50 mismatches=" + std::to_string(mismatches) + " identical=(" + fmt("%g", same.precision) +
                  "," + fmt("%g", same.recall) + ") far=(" + fmt("%g", apart.precision) + "," +
                  fmt("%g", apart.recall) + ") time=" + fmt("%.1fs", secs)};
}

std::vector<double> read_loss_csv(const fs::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot read " + path.string());
  std::vector<double> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    if (comma != std::string::npos) out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

Verdict desk_scale(ToyLoader& loader) {
  const auto& toy = loader.get();
  const auto& cfg = toy.model.config();
  const auto all = toy.all();
  std::ostringstream d;
  bool ok = true;

  const bool scale = all.records.size() >= 10 && cfg.alphabet.size() == 26 && cfg.canvas_side == 32 && cfg.T == 200 &&
                     toy.model.step() > 0 && toy.model.step() <= 30000;
  ok = ok && scale;
  d << "fonts=" << all.records.size() << " side=" << cfg.canvas_side << " T=" << cfg.T << " steps=" << toy.model.step();

  // (a) loss trend.
  const auto loss = read_loss_csv(toy.dir / "diffusion_loss.csv");
  const auto [start, end] = moving_average_ends(loss);
  ok = ok && end < start;
  d << " | loss_ma " << fmt("%.4f", start) << "->" << fmt("%.4f", end);

  // (b) class fidelity of conditional samples.
  const int n = 100;
  const int k = cfg.alphabet.size();
  std::vector<GlyphImage> refs;
  std::vector<int64_t> cls(n);
  for (int i = 0; i < n; ++i) {
    cls[static_cast<size_t>(i)] = i % k;
    const auto& rec = toy.train.records[static_cast<size_t>(i) % toy.train.records.size()];
    refs.push_back(toy.train.load_glyph(rec, cfg.alphabet.letter(i % k)));
  }
  auto styles = toy.enc.encode_batch(stack_images(refs, cfg.canvas_side));
  std::vector<GlyphImage> samples;
  const int chunk = 25;
  for (int b = 0; b < n; b += chunk) {
    auto part = toy.model.sample_batch(torch::tensor(std::vector<int64_t>(cls.begin() + b, cls.begin() + b + chunk)),
                                       styles.narrow(0, b, chunk), torch::ones({chunk}), cfg.w,
                                       derive_seed(0, "acceptance-samples", static_cast<uint64_t>(b)));
    samples.insert(samples.end(), part.begin(), part.end());
  }
  const double acc = recognition_accuracy(samples, std::vector<int>(cls.begin(), cls.end()), toy.clf);
  ok = ok && acc >= 0.7;
  d << " | class_acc=" << fmt("%.2f", acc);

  // (c) stroke weight of lambda = 0.5 blends sits between the endpoints.
  const auto pair = toy.weight_pair();
  const int seeds = 20;
  double ink_light = 0, ink_bold = 0, ink_cond = 0, ink_noise = 0;
  for (int s = 0; s < seeds; ++s) {
    const auto c = cfg.alphabet.char_class((s * 7) % k);
    const auto r1 = all.load_glyph(pair.light, c.letter), r2 = all.load_glyph(pair.bold, c.letter);
    const auto seed = static_cast<uint64_t>(s);
    ink_light += toy.model.sample(c, toy.enc.encode(r1), cfg.w, seed).ink_fraction() / seeds;
    ink_bold += toy.model.sample(c, toy.enc.encode(r2), cfg.w, seed).ink_fraction() / seeds;
    ink_cond += condition_interpolate(request(Approach::kConditionBlend, r1, r2, c, 0.5, cfg.w, seed), toy.enc,
                                      toy.model)
                    .ink_fraction() /
                seeds;
    ink_noise +=
        noise_interpolate(request(Approach::kNoiseBlend, r1, r2, c, 0.5, cfg.w, seed), toy.enc, toy.model)
            .ink_fraction() /
        seeds;
  }
  const double lo = std::min(ink_light, ink_bold) - 0.1, hi = std::max(ink_light, ink_bold) + 0.1;
  const bool ink_ok = ink_cond >= lo && ink_cond <= hi && ink_noise >= lo && ink_noise <= hi;
  ok = ok && ink_ok;
  d << " | ink light=" << fmt("%.3f", ink_light) << " bold=" << fmt("%.3f", ink_bold)
    << " cond=" << fmt("%.3f", ink_cond) << " noise=" << fmt("%.3f", ink_noise) << " family=" << pair.family;
  return {ok, d.str()};
}

Verdict fannet_baseline(ToyLoader& loader) {
  const auto& toy = loader.get();
  const auto& alpha = toy.enc.config().alphabet;
  int endpoint_fail = 0;
  const auto& recs = toy.train.records;
  for (size_t i = 0; i + 1 < recs.size() && i < 10; ++i) {
    const auto c = alpha.char_class(static_cast<int>(i * 5 % 26));
    const auto r1 = toy.train.load_glyph(recs[i], c.letter), r2 = toy.train.load_glyph(recs[i + 1], c.letter);
    endpoint_fail += fannet_interpolate(r1, r2, 1.0, c, toy.enc) == toy.enc.decode(toy.enc.encode(r1), c) ? 0 : 1;
    endpoint_fail += fannet_interpolate(r1, r2, 0.0, c, toy.enc) == toy.enc.decode(toy.enc.encode(r2), c) ? 0 : 1;
  }
  GlyphDataset ds(toy.train);
  std::vector<int64_t> idx(static_cast<size_t>(ds.size()));
  for (int64_t i = 0; i < ds.size(); ++i) idx[static_cast<size_t>(i)] = i;
  auto x = ds.images_tensor(idx);
  auto recon = toy.enc.decode_batch(toy.enc.encode_batch(x), ds.labels_tensor(idx));
  const double mae = (recon - x).abs().mean().item<double>();
  return {endpoint_fail == 0 && mae < 0.25,
          "endpoint_failures=" + std::to_string(endpoint_fail) + " train_mae=" + fmt("%.4f", mae)};
}

Verdict classifier_sanity(ToyLoader& loader) {
  const auto& toy = loader.get();
  GlyphDataset ds(toy.heldout());
  std::vector<GlyphImage> images;
  std::vector<int> labels;
  for (int64_t i = 0; i < ds.size(); ++i) {
    images.push_back(ds.image(i));
    labels.push_back(ds.label(i));
  }
  const double acc = recognition_accuracy(images, labels, toy.clf);
  Rng rng(901);
  for (size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[uniform_below(rng, i)]);
  const double shuffled = recognition_accuracy(images, labels, toy.clf);
  const double p = 1.0 / ds.alphabet().size();
  const double band = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(labels.size()));
  return {acc >= 0.5 && std::abs(shuffled - p) <= band,
          "heldout_n=" + std::to_string(labels.size()) + " acc=" + fmt("%.3f", acc) + " shuffled=" +
              fmt("%.3f", shuffled) + " band=" + fmt("%.3f", p) + "+-" + fmt("%.3f", band)};
}

Verdict reproducibility() {
  TempDir dir("accept_repro");
  const auto cfg = write_tiny_experiment(dir.path());
  const auto a = run_tiny_pipeline(cfg, dir / "a");
  const auto b = run_tiny_pipeline(cfg, dir / "b");
  bool ok = a.exits == b.exits && a.records.size() == b.records.size() && a.records.size() == a.exits.size();
  int compared = 0, differing = 0;
  std::set<std::string> commands;
  std::string first_diff;
  for (const auto& [name, code] : a.exits) ok = ok && code == 0;
  for (size_t i = 0; ok && i < a.records.size(); ++i) {
    const auto &ra = a.records[i], &rb = b.records[i];
    ok = ok && ra["status"] == "ok" && rb["status"] == "ok";
    commands.insert(ra["command"].get<std::string>());
    for (const auto& [path, hash] : ra["outputs"].items()) {
      ++compared;
      if (rb["outputs"].contains(path) && rb["outputs"][path] == hash) continue;
      ++differing;
      if (first_diff.empty()) first_diff = " first=" + ra["command"].get<std::string>() + ":" + path;
    }
    differing += ra["outputs"].size() == rb["outputs"].size() ? 0 : 1;
  }
  return {ok && differing == 0 && compared > 0 && commands.size() >= 8,
          "invocations=" + std::to_string(a.records.size()) + " commands=" + std::to_string(commands.size()) +
              " hashes=" + std::to_string(compared) + " differing=" + std::to_string(differing) + first_diff};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyphfusion acceptance checks"};
  std::string artifacts;
  std::vector<std::string> only;
  app.add_option("--artifacts", artifacts, "Directory holding the trained toy run")->required();
  app.add_option("--only", only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);

  torch::set_num_threads(1);
  ToyLoader loader(artifacts);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"schedule-suite", schedule_suite},
      {"guidance-algebra", guidance_algebra},
      {"lambda-endpoints", [&] { return lambda_endpoints(loader); }},
      {"or-blend-algebra", or_blend_algebra},
      {"sdedit-boundary", [&] { return sdedit_boundary(loader); }},
      {"precision-recall-oracle", pr_oracle},
      {"desk-scale-end-to-end", [&] { return desk_scale(loader); }},
      {"fannet-baseline", [&] { return fannet_baseline(loader); }},
      {"classifier-sanity", [&] { return classifier_sanity(loader); }},
      {"reproducibility", reproducibility},
  };

  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s %s [%.1fs] %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
