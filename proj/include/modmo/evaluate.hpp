#pragma once

// Concat baseline and the evaluation battery over the held-out split.
//
// Modes, all sampled with the same per-index seed:
//   sit_uncond     sit prompt, no branch
//   interaction    sit prompt + object
//   talk_uncond    talk prompt, no branch
//   cospeech       talk prompt + speech
//   fused          sit prompt + object + speech (both branches, adaptive fusion)
//   concat         upper body of cospeech[i] on interaction[i]
//   ground_truth   the held-out clips themselves
// Pair i couples interaction scene i with gesture speech i.

#include <map>
#include <set>

#include "modmo/metrics.hpp"
#include "modmo/train.hpp"

namespace modmo {

// Upper-body joint slots from `upper`, everything else (other joints and the
// root delta) from `lower`.
inline MotionClip concat_baseline(const MotionClip& upper, const MotionClip& lower,
                                  std::span<const int> upper_joints = upper_body_joints()) {
  upper.validate();
  lower.validate();
  require(upper.frames.rows() == lower.frames.rows(), ErrorCode::LengthMismatch,
          "clips differ in length (" + std::to_string(upper.frames.rows()) + " vs " +
              std::to_string(lower.frames.rows()) + " frames)");
  require(upper.fps == lower.fps, ErrorCode::LengthMismatch, "clips differ in fps");
  require(upper.normalized == lower.normalized && (!upper.normalized || upper.stats_id == lower.stats_id),
          ErrorCode::StatsMismatch, "clips must share their normalization");
  MotionClip out = lower;
  for (int j : upper_joints) {
    require(j >= 0 && j < kNumJoints, ErrorCode::InvalidArgument, "joint index out of range");
    out.frames.middleCols(6 * j, 6) = upper.frames.middleCols(6 * j, 6);
  }
  return out;
}

inline const std::vector<std::string>& eval_modes() {
  static const std::vector<std::string> m = {"sit_uncond", "interaction", "talk_uncond", "cospeech",
                                             "fused",      "concat",      "ground_truth"};
  return m;
}

struct ClipMetrics {
  std::string id;
  std::string mode;
  std::optional<PenetrationStats> pen;
  std::optional<GoalError> goal;
  std::optional<double> bc;
};

struct EvalReport {
  json config;
  std::uint64_t seed = 0;
  std::string stats_id;
  std::vector<ClipMetrics> clips;
  std::map<std::string, std::map<std::string, double>> aggregate;  // mode -> metric -> value

  json to_json() const {
    json per = json::array();
    for (const auto& c : clips) {
      json j = {{"id", c.id}, {"mode", c.mode}};
      if (c.pen) {
        j["penetration_ratio"] = c.pen->ratio;
        j["penetration_value"] = c.pen->value;
      }
      if (c.goal) {
        j["goal_pos_err"] = c.goal->pos;
        j["goal_height_err"] = c.goal->height;
        j["goal_orient_err"] = c.goal->orient;
      }
      if (c.bc) j["bc"] = *c.bc;
      per.push_back(j);
    }
    json agg = json::object();
    for (const auto& [mode, vals] : aggregate) agg[mode] = vals;
    return {{"seed", seed}, {"stats_id", stats_id}, {"config", config}, {"aggregate", agg}, {"per_clip", per}};
  }
};

struct EvalSamples {
  std::map<std::string, std::vector<MotionClip>> clips;  // mode -> clips in pair order
  std::map<std::string, std::vector<std::string>> ids;
};

namespace detail {

inline std::uint64_t eval_seed(std::uint64_t seed, std::size_t i) { return derive_seed(seed, 0xe000 + i); }

inline ConditionBundle eval_bundle(const std::string& prompt, const LoadedEntry* object_src,
                                   const LoadedEntry* speech_src) {
  ConditionBundle b = ConditionBundle::from_prompt(prompt);
  if (object_src) b.object = object_src->object;
  if (speech_src) b.speech = speech_src->speech;
  return b;
}

inline void add_mean(std::map<std::string, double>& agg, const char* key, const std::vector<double>& v) {
  if (v.empty()) return;
  double s = 0;
  for (double x : v) s += x;
  agg[key] = s / static_cast<double>(v.size());
}

}  // namespace detail

// Samples every mode on the held-out split and scores it.
inline EvalReport evaluate_corpus(const Corpus& corpus, const TrainedModels& models, const RunConfig& rc,
                                  std::uint64_t seed, EvalSamples* samples_out = nullptr) {
  require(corpus.manifest.stats_id == models.stats.id, ErrorCode::StatsMismatch,
          "corpus stats " + corpus.manifest.stats_id + " differ from the checkpoint's " + models.stats.id);
  const auto eval = load_split(corpus, "eval");
  std::vector<const LoadedEntry*> scenes, speeches;
  for (const auto& le : eval) {
    if (le.object && le.entry->goal) scenes.push_back(&le);
    if (le.speech) speeches.push_back(&le);
  }
  require(!scenes.empty() || !speeches.empty(), ErrorCode::DataMismatch, "eval split is empty");

  const Networks<Real> nets = models.networks();
  const NoiseSchedule sched = rc.noise_schedule();
  const Skeleton& sk = default_skeleton();
  const BodyProxy& proxy = default_body_proxy();

  EvalSamples local;
  EvalSamples& S = samples_out ? *samples_out : local;
  auto sample = [&](const ConditionBundle& b, std::size_t i, bool use_int, bool use_cs) {
    SampleOptions opt;
    opt.n_frames = rc.sample_frames;
    opt.fps = rc.sample_fps;
    opt.seed = detail::eval_seed(seed, i);
    opt.fusion = rc.fusion;
    opt.use_interaction = use_int;
    opt.use_cospeech = use_cs;
    return sample_full<Real>(b, nets, sched, opt).clip;
  };
  auto keep = [&](const std::string& mode, const std::string& id, MotionClip c) {
    S.clips[mode].push_back(std::move(c));
    S.ids[mode].push_back(id);
  };

  const std::size_t n_pairs = std::min(scenes.size(), speeches.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& e = *scenes[i];
    keep("sit_uncond", e.entry->id, sample(detail::eval_bundle(kSitPrompt, nullptr, nullptr), i, false, false));
    if (models.interaction)
      keep("interaction", e.entry->id, sample(detail::eval_bundle(kSitPrompt, &e, nullptr), i, true, false));
    keep("ground_truth", e.entry->id, e.clip);
  }
  for (std::size_t i = 0; i < speeches.size(); ++i) {
    const auto& e = *speeches[i];
    keep("talk_uncond", e.entry->id, sample(detail::eval_bundle(kTalkPrompt, nullptr, nullptr), i, false, false));
    if (models.cospeech)
      keep("cospeech", e.entry->id, sample(detail::eval_bundle(kTalkPrompt, nullptr, &e), i, false, true));
    keep("ground_truth", e.entry->id, e.clip);
  }
  if (models.interaction && models.cospeech) {
    for (std::size_t i = 0; i < n_pairs; ++i) {
      const std::string id = scenes[i]->entry->id + "+" + speeches[i]->entry->id;
      keep("fused", id, sample(detail::eval_bundle(kFusedPrompt, scenes[i], speeches[i]), i, true, true));
      keep("concat", id, concat_baseline(S.clips["cospeech"][i], S.clips["interaction"][i]));
    }
  }

  // Per-clip scores. Scene metrics need an object; BC needs speech.
  EvalReport rep;
  rep.config = rc.to_json();
  rep.seed = seed;
  rep.stats_id = models.stats.id;
  std::map<std::string, const LoadedEntry*> by_id;
  for (const auto& le : eval) by_id[le.entry->id] = &le;
  for (const auto& mode : eval_modes()) {
    if (!S.clips.count(mode)) continue;
    const auto& clips = S.clips[mode];
    const auto& ids = S.ids[mode];
    std::vector<double> ratio, value, pos, height, orient, bc;
    for (std::size_t k = 0; k < clips.size(); ++k) {
      ClipMetrics m;
      m.id = ids[k];
      m.mode = mode;
      const LoadedEntry* scene = nullptr;
      const LoadedEntry* speech = nullptr;
      if (mode == "fused" || mode == "concat") {
        scene = scenes[k];
        speech = speeches[k];
      } else {
        const LoadedEntry* le = by_id.at(ids[k]);
        (le->object ? scene : speech) = le;
      }
      if (scene) {
        m.pen = penetration(clips[k], sk, proxy, *scene->object);
        m.goal = goal_reach_error(clips[k], sk, *scene->entry->goal);
        ratio.push_back(m.pen->ratio);
        value.push_back(m.pen->value);
        pos.push_back(m.goal->pos);
        height.push_back(m.goal->height);
        orient.push_back(m.goal->orient);
      }
      if (speech) {
        m.bc = beat_consistency(clips[k], *speech->speech, rc.metrics);
        bc.push_back(*m.bc);
      }
      rep.clips.push_back(m);
    }
    auto& agg = rep.aggregate[mode];
    agg["count"] = static_cast<double>(clips.size());
    detail::add_mean(agg, "penetration_ratio", ratio);
    detail::add_mean(agg, "penetration_value", value);
    detail::add_mean(agg, "goal_pos_err", pos);
    detail::add_mean(agg, "goal_height_err", height);
    detail::add_mean(agg, "goal_orient_err", orient);
    detail::add_mean(agg, "bc", bc);
  }

  // Distribution metrics against the held-out gesture clips.
  std::vector<MotionClip> real;
  for (const auto* e : speeches) real.push_back(e->clip);
  auto stack = [&](const std::vector<MotionClip>& cs) {
    std::vector<MatD> fs;
    Eigen::Index rows = 0;
    for (const auto& c : cs) {
      fs.push_back(gesture_features(c, rc.metrics.window, rc.metrics.stride, sk));
      rows += fs.back().rows();
    }
    MatD out(rows, fs.empty() ? 0 : fs.front().cols());
    Eigen::Index r = 0;
    for (const auto& f : fs) {
      out.middleRows(r, f.rows()) = f;
      r += f.rows();
    }
    return out;
  };
  if (real.size() >= 1) {
    const MatD real_f = stack(real);
    if (real_f.rows() >= 2) {
      const GaussianFit real_g = fit_gaussian(real_f);
      for (const char* mode : {"talk_uncond", "cospeech", "fused", "concat"}) {
        if (!S.clips.count(mode)) continue;
        const MatD f = stack(S.clips[mode]);
        if (f.rows() < 2) continue;
        rep.aggregate[mode]["fgd"] = frechet_gesture_distance(real_g, fit_gaussian(f));
        rep.aggregate[mode]["diversity"] = diversity(f, rc.metrics.diversity_pairs, rc.metrics.diversity_seed);
      }
      rep.aggregate["ground_truth"]["fgd"] = frechet_gesture_distance(real_g, real_g);
      rep.aggregate["ground_truth"]["diversity"] =
          diversity(real_f, rc.metrics.diversity_pairs, rc.metrics.diversity_seed);
    }
  }
  return rep;
}

}  // namespace modmo
