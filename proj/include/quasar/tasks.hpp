#pragma once

// Synthetic labelled task bank for threshold calibration. Each task is a small
// program over one mock image. A latent world decides which detector
// candidates are truly present and the true answer to every question; model
// scores are noisy views of that world. The ground truth of a task is the
// program's value when every tool answers from the latent world.

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "quasar/conformal.hpp"
#include "quasar/mock_env.hpp"
#include "quasar/serialize.hpp"
#include "quasar/transpiler.hpp"

namespace quasar {

struct SynthOptions {
  double presence = 0.5;
  /// Mean score of a present candidate / the true label.
  double hit_mean = 0.75;
  /// Mean score of an absent candidate / a wrong label.
  double miss_mean = 0.3;
  double sd = 0.17;
  int max_candidates = 4;
};

/// The latent world of one image.
struct World {
  std::set<std::string> present;
  // token -> question -> true label
  std::map<std::string, std::map<std::string, std::string>> labels;
};

struct SynthTask {
  std::string name;
  std::string source;
  MockImage image;
  World world;
  Value truth;
};

/// Tools answering from the latent world.
class WorldEnv : public Environment {
 public:
  WorldEnv(const MockImage& image, const World& world) : image_(image), world_(world) {}

  CallResult call(const std::string& fn, const Value& arg) override {
    const auto& items = arg.items();
    const std::string& obj = items.at(0).leaf().as_string();
    const std::string& q = items.at(1).leaf().as_string();
    if (fn == ".find" || fn == ".exists") {
      Const::List out;
      if (obj == image_.image)
        if (auto it = image_.detections.find(q); it != image_.detections.end())
          for (const auto& [p, s] : it->second)
            if (world_.present.count(p)) out.emplace_back(p);
      if (fn == ".exists") return {Value(!out.empty()), 0};
      return {Value(Const(std::move(out))), 0};
    }
    if (fn == ".simple_query") return {Value(world_.labels.at(obj).at(q)), 0};
    throw Error(ErrorKind::environment, "unknown external function " + fn);
  }

 private:
  const MockImage& image_;
  const World& world_;
};

inline LowerOptions image_lower_options() {
  LowerOptions o;
  o.inputs = {"image"};
  return o;
}

namespace detail {

inline const std::vector<std::string>& synth_objects() {
  static const std::vector<std::string> v{"drink", "cup", "dog", "car", "chair", "bag"};
  return v;
}

inline const std::vector<std::string>& synth_questions() {
  static const std::vector<std::string> v{"Is it red?", "Is it open?", "Is it moving?", "Is it full?"};
  return v;
}

inline std::string fill(std::string t, const std::string& key, const std::string& val) {
  for (auto pos = t.find(key); pos != std::string::npos; pos = t.find(key, pos + val.size()))
    t.replace(pos, key.size(), val);
  return t;
}

inline const std::vector<std::string>& synth_templates() {
  static const std::vector<std::string> v{
      "patches = image.find(\"OBJ\")\n"
      "found = False\n"
      "for p in patches:\n"
      "    if p.simple_query(\"Q\") == \"yes\":\n"
      "        found = True\n"
      "return found\n",

      "n = 0\n"
      "for p in image.find(\"OBJ\"):\n"
      "    if p.simple_query(\"Q\") == \"yes\":\n"
      "        n = n + 1\n"
      "return n\n",

      "return len(image.find(\"OBJ\"))\n",

      "return image.simple_query(\"Q\")\n",

      "if image.exists(\"OBJ\"):\n"
      "    return image.simple_query(\"Q\")\n"
      "return \"none\"\n",

      "a = len(image.find(\"OBJ\"))\n"
      "b = len(image.find(\"OBJ2\"))\n"
      "return a > b\n",
  };
  return v;
}

class Synth {
 public:
  Synth(std::uint64_t seed, SynthOptions opt) : rng_(seed), opt_(opt) {}

  double score(bool hit) {
    std::normal_distribution<double> d(hit ? opt_.hit_mean : opt_.miss_mean, opt_.sd);
    return std::round(std::clamp(d(rng_), 0.0, 1.0) * 1000.0) / 1000.0;
  }

  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  /// Scores and true label for `question` asked of `token`.
  void ask(MockImage& img, World& w, const std::string& token, const std::string& question) {
    std::string label = coin(0.5) ? "yes" : "no";
    std::string other = label == "yes" ? "no" : "yes";
    w.labels[token][question] = label;
    img.answers[token][question] = {{label, score(true)}, {other, score(false)}};
    // Keep a fixed label order so the files read naturally.
    auto& s = img.answers[token][question];
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  }

  void detect(MockImage& img, World& w, const std::string& obj, const std::string& question) {
    int n = 1 + static_cast<int>(pick(static_cast<std::size_t>(opt_.max_candidates)));
    Scores cands;
    for (int i = 0; i < n; ++i) {
      std::string patch = img.image + "/" + obj + "/" + std::to_string(i);
      bool present = coin(opt_.presence);
      if (present) w.present.insert(patch);
      cands.emplace_back(patch, score(present));
      if (!question.empty()) ask(img, w, patch, question);
    }
    img.detections[obj] = std::move(cands);
  }

  SynthTask task(std::size_t index) {
    SynthTask t;
    char name[32];
    std::snprintf(name, sizeof name, "task%04zu", index);
    t.name = name;
    t.image.image = "img" + std::to_string(index);
    const auto& objs = synth_objects();
    const auto& qs = synth_questions();
    std::size_t kind = pick(synth_templates().size());
    std::size_t oi = pick(objs.size());
    std::string obj = objs[oi];
    std::string obj2 = objs[(oi + 1 + pick(objs.size() - 1)) % objs.size()];
    std::string q = qs[pick(qs.size())];
    std::string src = fill(fill(fill(synth_templates()[kind], "OBJ2", obj2), "OBJ", obj), "Q", q);
    t.source = src;
    switch (kind) {
      case 0:
      case 1: detect(t.image, t.world, obj, q); break;
      case 2: detect(t.image, t.world, obj, ""); break;
      case 3: ask(t.image, t.world, t.image.image, q); break;
      case 4:
        detect(t.image, t.world, obj, "");
        ask(t.image, t.world, t.image.image, q);
        break;
      default:
        detect(t.image, t.world, obj, "");
        detect(t.image, t.world, obj2, "");
        break;
    }
    WorldEnv env(t.image, t.world);
    t.truth = reference_eval(parse_source(t.source), env, {{"image", Value(t.image.image)}}).value;
    return t;
  }

 private:
  std::mt19937_64 rng_;
  SynthOptions opt_;
};

}  // namespace detail

inline std::vector<SynthTask> synth_tasks(std::size_t n, std::uint64_t seed, SynthOptions opt = {}) {
  detail::Synth s(seed, opt);
  std::vector<SynthTask> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(s.task(i));
  return out;
}

/// Labelled model calls drawn from the same process, for base-threshold
/// optimisation.
inline std::map<std::string, std::vector<ModelSample>> synth_model_samples(std::size_t n, std::uint64_t seed,
                                                                           SynthOptions opt = {}) {
  std::map<std::string, std::vector<ModelSample>> out;
  for (const auto& t : synth_tasks(n, seed, opt)) {
    for (const auto& [obj, cands] : t.image.detections) {
      ModelSample s;
      s.call.kind = ModelKind::detect;
      for (const auto& [p, score] : cands) {
        s.call.output.candidates.emplace_back(Const(p), score);
        if (t.world.present.count(p)) s.truth.insert(Const(p));
      }
      out[".find"].push_back(s);
      ModelSample e;
      double best = 0;
      for (const auto& [p, score] : cands) best = std::max(best, score);
      e.call.output = ScoredOutput{{{Const(true), best}, {Const(false), 1 - best}}};
      e.truth.insert(Const(!s.truth.empty()));
      out[".exists"].push_back(e);
    }
    for (const auto& [tok, qs] : t.image.answers) {
      for (const auto& [q, scores] : qs) {
        ModelSample s;
        for (const auto& [l, score] : scores) s.call.output.candidates.emplace_back(Const(l), score);
        s.truth.insert(Const(t.world.labels.at(tok).at(q)));
        out[".simple_query"].push_back(s);
      }
    }
  }
  return out;
}

/// Config whose per-model base thresholds are fitted on `n` synthetic
/// samples at level `alpha`, over thresholds 0.05, 0.10, ..., 0.95.
inline ConformalConfig fitted_config(double alpha = 0.1, std::size_t n = 200, std::uint64_t seed = 99) {
  ConformalConfig cfg;
  cfg.alpha = alpha;
  std::vector<double> grid;
  for (int i = 1; i < 20; ++i) grid.push_back(i * 0.05);
  cfg.base_thresholds =
      optimize_base_thresholds(synth_model_samples(n, seed), alpha, cfg.detection_certain_threshold, grid);
  return cfg;
}

inline CalibrationTask to_calibration_task(const SynthTask& t, std::uint64_t env_seed = 0) {
  CalibrationTask c;
  c.name = t.name;
  auto l = lower(parse_source(t.source), image_lower_options());
  c.program = std::move(l.program);
  c.funcs = std::move(l.funcs);
  c.inputs = {Value(t.image.image)};
  c.env = std::make_shared<MockEnv>(env_seed, std::vector<MockImage>{t.image});
  c.truth = t.truth;
  return c;
}

// ---------------------------------------------------------------------------
// On-disk bank: tasks.jsonl with one {"name", "source", "fixture", "truth"}
// record per line; paths are relative to the bank directory.

inline void write_task_bank(const std::vector<SynthTask>& tasks, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "sources");
  std::filesystem::create_directories(dir / "fixtures");
  std::ofstream index(dir / "tasks.jsonl");
  for (const auto& t : tasks) {
    std::string src = "sources/" + t.name + ".qs";
    std::string fix = "fixtures/" + t.image.image + ".json";
    std::ofstream(dir / src) << t.source;
    std::ofstream(dir / fix) << to_json(t.image).dump(2) << "\n";
    nlohmann::ordered_json rec{{"name", t.name}, {"source", src}, {"fixture", fix}, {"truth", to_text(t.truth)}};
    index << rec.dump() << "\n";
  }
}

inline std::vector<CalibrationTask> load_task_bank(const std::filesystem::path& file, std::uint64_t env_seed = 0) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::environment, "cannot read task bank " + file.string());
  auto base = file.parent_path();
  std::vector<CalibrationTask> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line);
    std::ifstream src(base / rec.at("source").get<std::string>());
    std::stringstream ss;
    ss << src.rdbuf();
    MockImage img = load_mock_image(base / rec.at("fixture").get<std::string>());
    CalibrationTask c;
    c.name = rec.at("name").get<std::string>();
    auto l = lower(parse_source(ss.str()), image_lower_options());
    c.program = std::move(l.program);
    c.funcs = std::move(l.funcs);
    c.inputs = {Value(img.image)};
    c.env = std::make_shared<MockEnv>(env_seed, std::vector<MockImage>{img});
    c.truth = parse_value(rec.at("truth").get<std::string>());
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace quasar
