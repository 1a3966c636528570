#pragma once

// Seeded mock tools standing in for a detector, a visual question answering
// model and a language model. Fixture files pin the scores for particular
// images and patches; anything not in a fixture is drawn from a generator
// keyed by (seed, function, argument), so repeated calls agree.
//
// Fixture file (one per image):
//   {"image": "img0",
//    "latency_ms": {".find": 100},   (also applies to calls on its patches)
//    "detections": {"drink": [{"patch": "p1", "score": 0.95}]},
//    "answers": {"p1": {"Is it red?": {"yes": 0.8, "no": 0.1}, "*": {...}}}}

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "quasar/conformal.hpp"

namespace quasar {

using Scores = std::vector<std::pair<std::string, double>>;

struct MockImage {
  std::string image;
  std::map<std::string, double> latency_ms;
  std::map<std::string, Scores> detections;
  // token -> question ("*" for any) -> label scores
  std::map<std::string, std::map<std::string, Scores>> answers;
};

namespace detail {

inline Scores scores_from_json(const nlohmann::json& j, const char* key) {
  Scores out;
  if (j.is_array()) {
    for (const auto& e : j) out.emplace_back(e.at(key).get<std::string>(), e.at("score").get<double>());
  } else {
    for (const auto& [k, v] : j.items()) out.emplace_back(k, v.get<double>());
  }
  return out;
}

inline nlohmann::ordered_json scores_to_json(const Scores& s, const char* key) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& [label, score] : s) out.push_back({{key, label}, {"score", score}});
  return out;
}

inline std::uint64_t mix_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline MockImage mock_image_from_json(const nlohmann::json& j) {
  MockImage m;
  m.image = j.at("image").get<std::string>();
  if (j.contains("latency_ms"))
    for (const auto& [fn, v] : j["latency_ms"].items()) m.latency_ms[fn] = v.get<double>();
  if (j.contains("detections"))
    for (const auto& [q, v] : j["detections"].items()) m.detections[q] = detail::scores_from_json(v, "patch");
  if (j.contains("answers"))
    for (const auto& [tok, qs] : j["answers"].items())
      for (const auto& [q, v] : qs.items()) m.answers[tok][q] = detail::scores_from_json(v, "label");
  return m;
}

inline nlohmann::ordered_json to_json(const MockImage& m) {
  nlohmann::ordered_json j;
  j["image"] = m.image;
  if (!m.latency_ms.empty()) j["latency_ms"] = m.latency_ms;
  auto det = nlohmann::ordered_json::object();
  for (const auto& [q, s] : m.detections) det[q] = detail::scores_to_json(s, "patch");
  j["detections"] = det;
  auto ans = nlohmann::ordered_json::object();
  for (const auto& [tok, qs] : m.answers) {
    auto per = nlohmann::ordered_json::object();
    for (const auto& [q, s] : qs) {
      auto labels = nlohmann::ordered_json::object();
      for (const auto& [l, v] : s) labels[l] = v;
      per[q] = labels;
    }
    ans[tok] = per;
  }
  j["answers"] = ans;
  return j;
}

inline MockImage load_mock_image(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw Error(ErrorKind::environment, "cannot read fixture " + p.string());
  try {
    return mock_image_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::environment, "bad fixture " + p.string() + ": " + e.what());
  }
}

/// Every *.json fixture in `dir`, in file-name order.
inline std::vector<MockImage> load_mock_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<MockImage> out;
  for (const auto& f : files) out.push_back(load_mock_image(f));
  return out;
}

class MockEnv : public ScoredEnvironment {
 public:
  explicit MockEnv(std::uint64_t seed, std::vector<MockImage> fixtures = {}) : seed_(seed) {
    for (auto& m : fixtures) add(std::move(m));
  }

  void add(MockImage m) {
    for (const auto& [tok, qs] : m.answers) {
      owner_[tok] = m.image;
      for (const auto& [q, s] : qs) answers_[tok][q] = s;
    }
    for (const auto& [q, ds] : m.detections)
      for (const auto& d : ds) owner_[d.first] = m.image;
    std::string key = m.image;
    images_[key] = std::move(m);
  }

  /// Concrete detections keep candidates scoring at least this.
  double detect_threshold = 0.5;

  std::optional<ScoredCall> scores(const std::string& fn, const Value& arg) override {
    if (fn == ".find") {
      auto [obj, query] = two_strings(fn, arg);
      return ScoredCall{ModelKind::detect, to_output(detections(obj, query)), latency(fn, obj, arg)};
    }
    if (fn == ".exists") {
      auto [obj, query] = two_strings(fn, arg);
      double best = 0;
      for (const auto& [p, s] : detections(obj, query)) best = std::max(best, s);
      ScoredOutput out{{{Const(true), best}, {Const(false), 1 - best}}};
      return ScoredCall{ModelKind::classify, out, latency(fn, obj, arg)};
    }
    if (fn == ".simple_query") {
      auto [obj, question] = two_strings(fn, arg);
      return ScoredCall{ModelKind::classify, to_output(answer(obj, question)), latency(fn, obj, arg)};
    }
    if (fn == ".llm_query" || fn == "llm_query") {
      std::string obj = arg.is_tuple() && !arg.items().empty() && arg.items()[0].is_leaf() &&
                                arg.items()[0].leaf().is_string()
                            ? arg.items()[0].leaf().as_string()
                            : "";
      return ScoredCall{ModelKind::classify, to_output(llm(fn, arg)), latency(fn, obj, arg)};
    }
    return std::nullopt;
  }

  CallResult call(const std::string& fn, const Value& arg) override {
    auto sc = scores(fn, arg);
    if (!sc) throw Error(ErrorKind::environment, "unknown external function " + fn);
    if (sc->kind == ModelKind::detect) {
      Const::List out;
      for (const auto& [item, score] : sc->output.candidates)
        if (score >= detect_threshold) out.push_back(item);
      return {Value(Const(std::move(out))), sc->latency_ms};
    }
    return {Value(sc->output.argmax()), sc->latency_ms};
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static ScoredOutput to_output(const Scores& s) {
    ScoredOutput out;
    for (const auto& [l, v] : s) out.candidates.emplace_back(Const(l), v);
    return out;
  }

  static std::pair<std::string, std::string> two_strings(const std::string& fn, const Value& arg) {
    if (!arg.is_tuple() || arg.items().size() != 2 || !arg.items()[0].is_leaf() || !arg.items()[1].is_leaf() ||
        !arg.items()[0].leaf().is_string() || !arg.items()[1].leaf().is_string())
      throw Error(ErrorKind::environment, fn + " expects (str, str), got " + to_text(arg));
    return {arg.items()[0].leaf().as_string(), arg.items()[1].leaf().as_string()};
  }

  std::mt19937_64 rng_for(const std::string& fn, const std::string& key) const {
    return std::mt19937_64(detail::mix_hash(std::to_string(seed_) + "|" + fn + "|" + key));
  }

  double latency(const std::string& fn, const std::string& obj, const Value& arg) const {
    auto owner = owner_.find(obj);
    const std::string& image = owner == owner_.end() ? obj : owner->second;
    if (auto it = images_.find(image); it != images_.end()) {
      if (auto l = it->second.latency_ms.find(fn); l != it->second.latency_ms.end()) return l->second;
    }
    auto rng = rng_for("latency" + fn, to_text(arg));
    return 50.0 + static_cast<double>(rng() % 151);
  }

  Scores detections(const std::string& obj, const std::string& query) const {
    if (auto it = images_.find(obj); it != images_.end()) {
      if (auto d = it->second.detections.find(query); d != it->second.detections.end()) return d->second;
    }
    auto rng = rng_for(".find", obj + "/" + query);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Scores out;
    int n = static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) out.emplace_back(obj + "/" + query + "/" + std::to_string(i), u(rng));
    return out;
  }

  Scores answer(const std::string& obj, const std::string& question) const {
    if (auto it = answers_.find(obj); it != answers_.end()) {
      if (auto q = it->second.find(question); q != it->second.end()) return q->second;
      if (auto q = it->second.find("*"); q != it->second.end()) return q->second;
    }
    auto rng = rng_for(".simple_query", obj + "?" + question);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double yes = u(rng);
    double no = std::clamp(1.0 - yes + (u(rng) - 0.5) * 0.4, 0.0, 1.0);
    return {{"yes", yes}, {"no", no}};
  }

  Scores llm(const std::string& fn, const Value& arg) const {
    auto rng = rng_for(fn, to_text(arg));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uint64_t h = rng();
    Scores out;
    for (int i = 0; i < 3; ++i) out.emplace_back("answer-" + std::to_string((h >> (4 * i)) % 16), u(rng));
    // Distinct labels.
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
              out.end());
    return out;
  }

  std::uint64_t seed_;
  std::map<std::string, MockImage> images_;
  std::map<std::string, std::map<std::string, Scores>> answers_;
  // patch token -> image whose fixture lists it
  std::map<std::string, std::string> owner_;
};

/// Mock environment with the given seed and the fixtures in `dir`, if any.
inline MockEnv mock_env(std::uint64_t seed, const std::filesystem::path& dir = {}) {
  std::vector<MockImage> fixtures;
  if (!dir.empty()) fixtures = load_mock_images(dir);
  return MockEnv(seed, std::move(fixtures));
}

}  // namespace quasar
