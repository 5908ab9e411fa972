#pragma once

// Run config: one JSON file for every command. Missing keys take the
// defaults below; unknown top-level keys are rejected. See docs/formats.md.

#include <string>

#include "modmo/corpus.hpp"
#include "modmo/denoiser.hpp"
#include "modmo/diffusion.hpp"
#include "modmo/losses.hpp"
#include "modmo/metrics.hpp"
#include "modmo/optim.hpp"

namespace modmo {

enum class Stage { Mdm, Interaction, CoSpeech };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Interaction: return "interaction";
    case Stage::CoSpeech: return "cospeech";
    default: return "mdm";
  }
}

inline Stage parse_stage(std::string_view s) {
  if (s == "mdm") return Stage::Mdm;
  if (s == "interaction") return Stage::Interaction;
  require(s == "cospeech", ErrorCode::InvalidArgument, "unknown stage '" + std::string(s) + "'");
  return Stage::CoSpeech;
}

inline std::string_view to_string(ScheduleKind k) { return k == ScheduleKind::Cosine ? "cosine" : "linear"; }

inline ScheduleKind parse_schedule(std::string_view s) {
  if (s == "cosine") return ScheduleKind::Cosine;
  require(s == "linear", ErrorCode::InvalidArgument, "unknown schedule '" + std::string(s) + "'");
  return ScheduleKind::Linear;
}

struct StageTrainConfig {
  int steps = 1000;
  int batch = 8;
  AdamWConfig opt{.lr = 1e-3};
  double cond_dropout = 0.0;  // zero prompt + goal with this probability
  double goal_dropout = 0.5;  // omit the goal with this probability

  void validate() const {
    require(steps >= 0 && batch >= 1, ErrorCode::InvalidArgument, "need steps >= 0 and batch >= 1");
    require(opt.lr > 0 && opt.beta1 >= 0 && opt.beta1 < 1 && opt.beta2 >= 0 && opt.beta2 < 1 && opt.eps > 0 &&
                opt.weight_decay >= 0,
            ErrorCode::InvalidArgument, "bad optimizer settings");
    require(cond_dropout >= 0 && cond_dropout <= 1 && goal_dropout >= 0 && goal_dropout <= 1,
            ErrorCode::InvalidArgument, "dropout probabilities must lie in [0, 1]");
  }

  json to_json() const {
    return {{"steps", steps},
            {"batch", batch},
            {"lr", opt.lr},
            {"beta1", opt.beta1},
            {"beta2", opt.beta2},
            {"eps", opt.eps},
            {"weight_decay", opt.weight_decay},
            {"cond_dropout", cond_dropout},
            {"goal_dropout", goal_dropout}};
  }

  static StageTrainConfig from_json(const json& j, StageTrainConfig c) {
    c.steps = json_get(j, "steps", c.steps);
    c.batch = json_get(j, "batch", c.batch);
    c.opt.lr = json_get(j, "lr", c.opt.lr);
    c.opt.beta1 = json_get(j, "beta1", c.opt.beta1);
    c.opt.beta2 = json_get(j, "beta2", c.opt.beta2);
    c.opt.eps = json_get(j, "eps", c.opt.eps);
    c.opt.weight_decay = json_get(j, "weight_decay", c.opt.weight_decay);
    c.cond_dropout = json_get(j, "cond_dropout", c.cond_dropout);
    c.goal_dropout = json_get(j, "goal_dropout", c.goal_dropout);
    c.validate();
    return c;
  }
};

struct RunConfig {
  std::uint64_t seed = 0;
  CorpusConfig corpus;
  DenoiserConfig model;
  ScheduleKind schedule = ScheduleKind::Cosine;
  int T = 50;
  FusionConfig fusion;
  // The collision term is a mean over masked frames x proxy spheres, so its
  // weight is large next to the other terms.
  LossWeights loss{.w_collision = 1000.0};
  int n_bps = kDefaultNumBps;
  std::uint64_t bps_seed = 0xb95;
  StageTrainConfig train_mdm{.steps = 2000, .batch = 8, .cond_dropout = 0.1};
  StageTrainConfig train_interaction{.steps = 1400, .batch = 4};
  StageTrainConfig train_cospeech{.steps = 600, .batch = 4};
  int sample_frames = 48;
  double sample_fps = 20.0;
  MetricConfig metrics;

  const StageTrainConfig& stage(Stage s) const {
    return s == Stage::Mdm ? train_mdm : s == Stage::Interaction ? train_interaction : train_cospeech;
  }

  void validate() const {
    corpus.validate();
    model.validate();
    require(T >= 1, ErrorCode::InvalidArgument, "T must be positive");
    require(fusion.lambda_min <= fusion.lambda_max && fusion.eta >= 0, ErrorCode::InvalidArgument,
            "need lambda_min <= lambda_max and eta >= 0");
    loss.validate();
    require(n_bps > 0, ErrorCode::InvalidArgument, "n_bps must be positive");
    for (Stage s : {Stage::Mdm, Stage::Interaction, Stage::CoSpeech}) stage(s).validate();
    require(sample_frames >= 1 && sample_fps > 0, ErrorCode::InvalidArgument, "bad sampling length");
    require(metrics.window >= 1 && metrics.stride >= 1 && metrics.bc_sigma > 0, ErrorCode::InvalidArgument,
            "bad metric settings");
  }

  json to_json() const {
    json l = {{"w_rec", loss.w_rec},         {"w_pelvis", loss.w_pelvis},
              {"w_contact", loss.w_contact}, {"w_collision", loss.w_collision},
              {"k_frames", loss.k_frames},   {"contact_max", loss.contact_max},
              {"contact_joints", loss.contact_joints}};
    return {{"seed", seed},
            {"corpus", corpus.to_json()},
            {"model",
             {{"d_model", model.d_model},
              {"heads", model.heads},
              {"ff_mult", model.ff_mult},
              {"n_blocks", model.n_blocks},
              {"d_time", model.d_time}}},
            {"diffusion", {{"schedule", to_string(schedule)}, {"T", T}}},
            {"fusion",
             {{"lambda_init", fusion.lambda_init},
              {"eta", fusion.eta},
              {"lambda_min", fusion.lambda_min},
              {"lambda_max", fusion.lambda_max},
              {"adaptive", fusion.adaptive}}},
            {"loss", l},
            {"bps", {{"n", n_bps}, {"seed", bps_seed}}},
            {"train",
             {{"mdm", train_mdm.to_json()},
              {"interaction", train_interaction.to_json()},
              {"cospeech", train_cospeech.to_json()}}},
            {"sample", {{"n_frames", sample_frames}, {"fps", sample_fps}}},
            {"metrics",
             {{"window", metrics.window},
              {"stride", metrics.stride},
              {"bc_sigma", metrics.bc_sigma},
              {"onset_ratio", metrics.onset_ratio},
              {"speed_min_ratio", metrics.speed_min_ratio},
              {"diversity_pairs", metrics.diversity_pairs},
              {"diversity_seed", metrics.diversity_seed}}}};
  }

  static RunConfig from_json(const json& j) {
    require(j.is_object(), ErrorCode::Format, "config must be a JSON object");
    static const std::set<std::string> known = {"seed",  "corpus", "model", "diffusion", "fusion",
                                                "loss",  "bps",    "train", "sample",    "metrics"};
    for (const auto& [k, v] : j.items())
      require(known.count(k) > 0, ErrorCode::Format, "unknown config key '" + k + "'");
    RunConfig c;
    c.seed = json_get<std::uint64_t>(j, "seed", c.seed);
    if (j.contains("corpus")) c.corpus = CorpusConfig::from_json(j.at("corpus"));
    if (j.contains("model")) {
      const json& m = j.at("model");
      c.model.d_model = json_get(m, "d_model", c.model.d_model);
      c.model.heads = json_get(m, "heads", c.model.heads);
      c.model.ff_mult = json_get(m, "ff_mult", c.model.ff_mult);
      c.model.n_blocks = json_get(m, "n_blocks", c.model.n_blocks);
      c.model.d_time = json_get(m, "d_time", c.model.d_time);
    }
    if (j.contains("diffusion")) {
      const json& d = j.at("diffusion");
      c.schedule = parse_schedule(json_get<std::string>(d, "schedule", "cosine"));
      c.T = json_get(d, "T", c.T);
    }
    if (j.contains("fusion")) {
      const json& f = j.at("fusion");
      c.fusion.lambda_init = json_get(f, "lambda_init", c.fusion.lambda_init);
      c.fusion.eta = json_get(f, "eta", c.fusion.eta);
      c.fusion.lambda_min = json_get(f, "lambda_min", c.fusion.lambda_min);
      c.fusion.lambda_max = json_get(f, "lambda_max", c.fusion.lambda_max);
      c.fusion.adaptive = json_get(f, "adaptive", c.fusion.adaptive);
    }
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      c.loss.w_rec = json_get(l, "w_rec", c.loss.w_rec);
      c.loss.w_pelvis = json_get(l, "w_pelvis", c.loss.w_pelvis);
      c.loss.w_contact = json_get(l, "w_contact", c.loss.w_contact);
      c.loss.w_collision = json_get(l, "w_collision", c.loss.w_collision);
      c.loss.k_frames = json_get(l, "k_frames", c.loss.k_frames);
      c.loss.contact_max = json_get(l, "contact_max", c.loss.contact_max);
      c.loss.contact_joints = json_get(l, "contact_joints", c.loss.contact_joints);
    }
    if (j.contains("bps")) {
      c.n_bps = json_get(j.at("bps"), "n", c.n_bps);
      c.bps_seed = json_get<std::uint64_t>(j.at("bps"), "seed", c.bps_seed);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      if (t.contains("mdm")) c.train_mdm = StageTrainConfig::from_json(t.at("mdm"), c.train_mdm);
      if (t.contains("interaction"))
        c.train_interaction = StageTrainConfig::from_json(t.at("interaction"), c.train_interaction);
      if (t.contains("cospeech")) c.train_cospeech = StageTrainConfig::from_json(t.at("cospeech"), c.train_cospeech);
    }
    if (j.contains("sample")) {
      c.sample_frames = json_get(j.at("sample"), "n_frames", c.sample_frames);
      c.sample_fps = json_get(j.at("sample"), "fps", c.sample_fps);
    }
    if (j.contains("metrics")) {
      const json& m = j.at("metrics");
      c.metrics.window = json_get(m, "window", c.metrics.window);
      c.metrics.stride = json_get(m, "stride", c.metrics.stride);
      c.metrics.bc_sigma = json_get(m, "bc_sigma", c.metrics.bc_sigma);
      c.metrics.onset_ratio = json_get(m, "onset_ratio", c.metrics.onset_ratio);
      c.metrics.speed_min_ratio = json_get(m, "speed_min_ratio", c.metrics.speed_min_ratio);
      c.metrics.diversity_pairs = json_get(m, "diversity_pairs", c.metrics.diversity_pairs);
      c.metrics.diversity_seed = json_get<std::uint64_t>(m, "diversity_seed", c.metrics.diversity_seed);
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::string& path) { return from_json(read_json_file(path)); }

  NoiseSchedule noise_schedule() const { return NoiseSchedule::make(schedule, T); }
  BasisPointSet canonical_bps() const { return bps_generate(bps_seed, n_bps, 1.0); }
};

}  // namespace modmo
