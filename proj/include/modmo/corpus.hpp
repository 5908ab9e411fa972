#pragma once

// Synthetic corpus on disk.
//
//   <root>/manifest.json
//   <root>/stats.json                  normalization stats of the train split
//   <root>/clips/<id>.clip             denormalized MotionClip files
//   <root>/objects/<id>.json           interaction entries
//   <root>/audio/<id>.wav              gesture entries
//   <root>/transcripts/<id>.json       gesture entries
//
// All paths inside the manifest are relative to <root>. See docs/formats.md.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "modmo/audio.hpp"
#include "modmo/diffusion.hpp"
#include "modmo/encoders.hpp"
#include "modmo/geometry.hpp"
#include "modmo/motion_io.hpp"
#include "modmo/synth.hpp"

namespace modmo {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers shared by the harness

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::Io, "write failed for " + path);
}

template <class T>
T json_get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline json goal_to_json(const GoalSpec& g) {
  return {{"position", {g.position.x(), g.position.y()}}, {"height", g.height}, {"heading", g.heading}};
}

inline GoalSpec goal_from_json(const json& j) {
  try {
    GoalSpec g;
    g.position = {j.at("position").at(0).get<double>(), j.at("position").at(1).get<double>()};
    g.height = j.at("height").get<double>();
    g.heading = j.at("heading").get<double>();
    return g;
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad goal: ") + e.what());
  }
}

inline json stats_to_json(const NormStats& s) {
  return {{"id", s.id},
          {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

inline NormStats stats_from_json(const json& j) {
  NormStats s;
  try {
    s.id = j.at("id").get<std::string>();
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto d = j.at("std").get<std::vector<double>>();
    require(m.size() == kFrameDim && d.size() == kFrameDim, ErrorCode::StatsMismatch, "stats must have 135 entries");
    s.mean = Eigen::Map<const VecD>(m.data(), kFrameDim);
    s.std = Eigen::Map<const VecD>(d.data(), kFrameDim);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad stats: ") + e.what());
  }
  s.validate();
  return s;
}

// Content hash of the numbers, so equal stats get equal ids.
inline std::string stats_content_id(const NormStats& s) {
  std::string bytes;
  bytes.append(reinterpret_cast<const char*>(s.mean.data()), sizeof(double) * kFrameDim);
  bytes.append(reinterpret_cast<const char*>(s.std.data()), sizeof(double) * kFrameDim);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "stats-%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

// ---------------------------------------------------------------------------
// Config

struct CorpusConfig {
  std::uint64_t seed = 0;
  int n_frames = 48;
  double fps = 20.0;
  int n_interaction = 32;     // train split, ends_sitting
  int n_starts_sitting = 0;   // train split, time-reversed clips
  int n_gesture = 32;         // train split
  int n_eval_interaction = 16;
  int n_eval_gesture = 16;
  SceneConfig scene;
  InteractionTiming timing;

  void validate() const {
    require(n_frames >= 24 && fps > 0, ErrorCode::InvalidArgument, "corpus needs n_frames >= 24 and fps > 0");
    require(n_interaction >= 0 && n_starts_sitting >= 0 && n_gesture >= 0 && n_eval_interaction >= 0 &&
                n_eval_gesture >= 0,
            ErrorCode::InvalidArgument, "clip counts must be non-negative");
    require(n_interaction + n_starts_sitting + n_gesture > 0, ErrorCode::InvalidArgument,
            "the train split needs at least one clip");
  }

  json to_json() const {
    return {{"seed", seed},
            {"n_frames", n_frames},
            {"fps", fps},
            {"n_interaction", n_interaction},
            {"n_starts_sitting", n_starts_sitting},
            {"n_gesture", n_gesture},
            {"n_eval_interaction", n_eval_interaction},
            {"n_eval_gesture", n_eval_gesture},
            {"scene",
             {{"dist_min", scene.dist_min},
              {"dist_max", scene.dist_max},
              {"bearing_max", scene.bearing_max},
              {"yaw_jitter", scene.yaw_jitter},
              {"seat_min", scene.seat_min},
              {"seat_max", scene.seat_max}}},
            {"k_frames", timing.k_frames}};
  }

  static CorpusConfig from_json(const json& j) {
    CorpusConfig c;
    c.seed = json_get<std::uint64_t>(j, "seed", c.seed);
    c.n_frames = json_get(j, "n_frames", c.n_frames);
    c.fps = json_get(j, "fps", c.fps);
    c.n_interaction = json_get(j, "n_interaction", c.n_interaction);
    c.n_starts_sitting = json_get(j, "n_starts_sitting", c.n_starts_sitting);
    c.n_gesture = json_get(j, "n_gesture", c.n_gesture);
    c.n_eval_interaction = json_get(j, "n_eval_interaction", c.n_eval_interaction);
    c.n_eval_gesture = json_get(j, "n_eval_gesture", c.n_eval_gesture);
    if (j.contains("scene")) {
      const json& s = j.at("scene");
      c.scene.dist_min = json_get(s, "dist_min", c.scene.dist_min);
      c.scene.dist_max = json_get(s, "dist_max", c.scene.dist_max);
      c.scene.bearing_max = json_get(s, "bearing_max", c.scene.bearing_max);
      c.scene.yaw_jitter = json_get(s, "yaw_jitter", c.scene.yaw_jitter);
      c.scene.seat_min = json_get(s, "seat_min", c.scene.seat_min);
      c.scene.seat_max = json_get(s, "seat_max", c.scene.seat_max);
    }
    c.timing.k_frames = json_get(j, "k_frames", c.timing.k_frames);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Manifest

struct CorpusEntry {
  std::string id;
  std::string motion;
  std::string object;      // empty when absent
  std::string audio;       // empty when absent
  std::string transcript;  // empty when absent
  std::string prompt;
  MotionTag tag = MotionTag::None;
  std::string split = "train";
  std::optional<GoalSpec> goal;
  std::vector<double> beats;
  std::uint64_t seed = 0;

  json to_json() const {
    json j = {{"id", id}, {"motion", motion}, {"prompt", prompt}, {"tag", to_string(tag)}, {"split", split},
              {"seed", seed}};
    if (!object.empty()) j["object"] = object;
    if (!audio.empty()) j["audio"] = audio;
    if (!transcript.empty()) j["transcript"] = transcript;
    if (goal) j["goal"] = goal_to_json(*goal);
    if (!beats.empty()) j["beats"] = beats;
    return j;
  }

  static CorpusEntry from_json(const json& j) {
    CorpusEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.motion = j.at("motion").get<std::string>();
      e.prompt = json_get<std::string>(j, "prompt", "");
      e.tag = parse_motion_tag(json_get<std::string>(j, "tag", "none"));
      e.split = json_get<std::string>(j, "split", "train");
      e.object = json_get<std::string>(j, "object", "");
      e.audio = json_get<std::string>(j, "audio", "");
      e.transcript = json_get<std::string>(j, "transcript", "");
      e.seed = json_get<std::uint64_t>(j, "seed", 0);
      if (j.contains("goal")) e.goal = goal_from_json(j.at("goal"));
      e.beats = json_get<std::vector<double>>(j, "beats", {});
    } catch (const json::exception& ex) {
      fail(ErrorCode::Format, std::string("bad manifest entry: ") + ex.what());
    }
    require(e.audio.empty() == e.transcript.empty(), ErrorCode::Format,
            "entry " + e.id + ": audio and transcript come together");
    return e;
  }
};

struct CorpusManifest {
  int version = 1;
  std::string stats_id;
  std::string stats_file = "stats.json";
  std::vector<CorpusEntry> entries;
  json config;  // generator config, recorded verbatim

  std::vector<const CorpusEntry*> split(const std::string& name) const {
    std::vector<const CorpusEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }

  json to_json() const {
    json es = json::array();
    for (const auto& e : entries) es.push_back(e.to_json());
    return {{"version", version}, {"stats_id", stats_id}, {"stats_file", stats_file}, {"config", config},
            {"entries", es}};
  }

  static CorpusManifest from_json(const json& j) {
    CorpusManifest m;
    try {
      m.version = j.at("version").get<int>();
      m.stats_id = j.at("stats_id").get<std::string>();
      m.stats_file = json_get<std::string>(j, "stats_file", m.stats_file);
      m.config = json_get<json>(j, "config", json::object());
      for (const auto& e : j.at("entries")) m.entries.push_back(CorpusEntry::from_json(e));
    } catch (const json::exception& ex) {
      fail(ErrorCode::Format, std::string("bad manifest: ") + ex.what());
    }
    require(m.version == 1, ErrorCode::Format, "unsupported manifest version " + std::to_string(m.version));
    return m;
  }

  // Files exist, ids unique, every entry in exactly one split.
  void validate(const fs::path& root) const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      require(ids.insert(e.id).second, ErrorCode::DataMismatch, "duplicate entry id " + e.id);
      require(e.split == "train" || e.split == "eval", ErrorCode::DataMismatch,
              "entry " + e.id + " has unknown split '" + e.split + "'");
      for (const auto* f : {&e.motion, &e.object, &e.audio, &e.transcript})
        if (!f->empty())
          require(fs::exists(root / *f), ErrorCode::DataMismatch, "entry " + e.id + ": missing file " + *f);
    }
    require(fs::exists(root / stats_file), ErrorCode::DataMismatch, "missing stats file " + stats_file);
  }
};

struct Corpus {
  fs::path root;
  CorpusManifest manifest;
  NormStats stats;
};

inline Corpus load_corpus(const fs::path& manifest_path) {
  Corpus c;
  c.root = manifest_path.parent_path();
  c.manifest = CorpusManifest::from_json(read_json_file(manifest_path.string()));
  c.manifest.validate(c.root);
  c.stats = stats_from_json(read_json_file((c.root / c.manifest.stats_file).string()));
  require(c.stats.id == c.manifest.stats_id, ErrorCode::StatsMismatch,
          "stats file id " + c.stats.id + " does not match manifest " + c.manifest.stats_id);
  return c;
}

// One entry with its files read.
struct LoadedEntry {
  const CorpusEntry* entry = nullptr;
  MotionClip clip;  // denormalized
  std::optional<ObjectGeometry> object;
  std::optional<SpeechInput> speech;

  ConditionBundle bundle(bool with_goal = true) const {
    ConditionBundle b = ConditionBundle::from_prompt(entry->prompt);
    if (entry->prompt.empty()) b = ConditionBundle::null();
    if (with_goal) b.goal = entry->goal;
    b.object = object;
    b.speech = speech;
    return b;
  }
};

inline LoadedEntry load_entry(const Corpus& c, const CorpusEntry& e) {
  LoadedEntry le;
  le.entry = &e;
  le.clip = read_clip((c.root / e.motion).string());
  require(!le.clip.normalized, ErrorCode::DataMismatch, "corpus clips are stored denormalized: " + e.motion);
  if (!e.object.empty()) le.object = read_object((c.root / e.object).string());
  if (!e.audio.empty()) {
    le.speech = read_wav((c.root / e.audio).string());
    le.speech->transcript = read_transcript((c.root / e.transcript).string());
    validate_transcript(*le.speech);
  }
  return le;
}

inline std::vector<LoadedEntry> load_split(const Corpus& c, const std::string& split) {
  std::vector<LoadedEntry> out;
  for (const auto* e : c.manifest.split(split)) out.push_back(load_entry(c, *e));
  return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

inline std::string entry_id(const char* kind, const std::string& split, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%s_%03d", split.c_str(), kind, i);
  return buf;
}

// Retries with derived seeds until the generator accepts the scene.
inline std::pair<SyntheticScene, InteractionClip> make_interaction(const CorpusConfig& cfg, std::uint64_t seed,
                                                                   MotionTag tag) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    const std::uint64_t s = derive_seed(seed, attempt);
    SyntheticScene scene = sample_scene(s, cfg.scene);
    scene.tag = tag;
    try {
      InteractionClip clip = gen_interaction_clip(scene, cfg.n_frames, cfg.fps, derive_seed(s, 1), cfg.timing);
      return {scene, clip};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnreachableGoal) throw;
    }
  }
  fail(ErrorCode::UnreachableGoal, "no reachable scene after 64 attempts");
}

}  // namespace detail

inline constexpr const char* kStandPrompt = "a person stands up from the chair and walks away";

// Writes every file and returns the manifest. Reproducible from cfg alone.
inline CorpusManifest generate_corpus(const CorpusConfig& cfg, const fs::path& root) {
  cfg.validate();
  for (const char* d : {"clips", "objects", "audio", "transcripts"}) fs::create_directories(root / d);

  CorpusManifest m;
  m.config = cfg.to_json();
  std::vector<std::pair<CorpusEntry, MotionClip>> made;

  auto add_interaction = [&](const std::string& split, MotionTag tag, int i, std::uint64_t stream) {
    const std::uint64_t seed = derive_seed(cfg.seed, stream);
    auto [scene, ic] = detail::make_interaction(cfg, seed, tag);
    CorpusEntry e;
    e.id = detail::entry_id(tag == MotionTag::StartsSitting ? "stand" : "sit", split, i);
    e.motion = "clips/" + e.id + ".clip";
    e.object = "objects/" + e.id + ".json";
    e.prompt = tag == MotionTag::StartsSitting ? kStandPrompt : ic.prompt;
    e.tag = tag;
    e.split = split;
    e.goal = scene.goal;
    e.seed = seed;
    write_object((root / e.object).string(), scene.object);
    made.emplace_back(e, ic.clip);
  };
  auto add_gesture = [&](const std::string& split, int i, std::uint64_t stream) {
    const std::uint64_t seed = derive_seed(cfg.seed, stream);
    const auto beats = sample_beats(seed, cfg.n_frames, cfg.fps);
    GestureClip gc = gen_gesture_clip(beats, cfg.n_frames, cfg.fps, derive_seed(seed, 1));
    CorpusEntry e;
    e.id = detail::entry_id("talk", split, i);
    e.motion = "clips/" + e.id + ".clip";
    e.audio = "audio/" + e.id + ".wav";
    e.transcript = "transcripts/" + e.id + ".json";
    e.prompt = gc.prompt;
    e.split = split;
    e.beats = gc.beat_times;
    e.seed = seed;
    write_wav((root / e.audio).string(), gc.speech);
    write_transcript((root / e.transcript).string(), gc.speech.transcript);
    made.emplace_back(e, gc.clip);
  };

  // Streams keep each clip's seed independent of the other counts.
  for (int i = 0; i < cfg.n_interaction; ++i) add_interaction("train", MotionTag::EndsSitting, i, 0x1000 + i);
  for (int i = 0; i < cfg.n_starts_sitting; ++i) add_interaction("train", MotionTag::StartsSitting, i, 0x2000 + i);
  for (int i = 0; i < cfg.n_gesture; ++i) add_gesture("train", i, 0x3000 + i);
  for (int i = 0; i < cfg.n_eval_interaction; ++i) add_interaction("eval", MotionTag::EndsSitting, i, 0x4000 + i);
  for (int i = 0; i < cfg.n_eval_gesture; ++i) add_gesture("eval", i, 0x5000 + i);

  std::vector<MotionClip> train;
  for (const auto& [e, c] : made)
    if (e.split == "train") train.push_back(c);
  NormStats stats = compute_stats(train, "");
  stats.id = stats_content_id(stats);
  m.stats_id = stats.id;
  write_json_file((root / m.stats_file).string(), stats_to_json(stats));

  for (auto& [e, c] : made) {
    const json meta = {{"id", e.id}, {"seed", e.seed}, {"corpus_seed", cfg.seed}};
    write_clip((root / e.motion).string(), c, meta.dump());
    m.entries.push_back(e);
  }
  write_json_file((root / "manifest.json").string(), m.to_json());
  return m;
}

}  // namespace modmo
