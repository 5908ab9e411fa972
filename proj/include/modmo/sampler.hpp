#pragma once

// Reverse diffusion with optional adaptation branches and adaptive fusion of
// the guidance weights.

#include <optional>
#include <vector>

#include "modmo/denoiser.hpp"
#include "modmo/diffusion.hpp"
#include "modmo/encoders.hpp"

namespace modmo {

template <class T>
struct Networks {
  const MdmParams<T>* mdm = nullptr;
  const BranchParams<T>* interaction = nullptr;
  const BranchParams<T>* cospeech = nullptr;
  const NormStats* stats = nullptr;
  const BasisPointSet* canonical_bps = nullptr;  // needed by the interaction branch
  const Skeleton* skeleton = &default_skeleton();
};

// Everything derived once per bundle.
struct PreparedCondition {
  CondInput base;
  std::optional<ObjectContext> object;
  std::optional<MatD> speech_feats;  // N x kSpeechFeatureDim
};

template <class T>
PreparedCondition prepare_condition(const ConditionBundle& b, const Networks<T>& nets, Eigen::Index n_frames,
                                    double fps) {
  PreparedCondition pc;
  pc.base = CondInput::from_bundle(b);
  if (b.object) {
    require(nets.canonical_bps != nullptr, ErrorCode::MissingCondition, "object given but no basis point set");
    pc.object.emplace(*b.object, *nets.canonical_bps);
  }
  if (b.speech) pc.speech_feats = speech_condition_features(*b.speech, fps, n_frames);
  return pc;
}

template <class T>
Mat<T> interaction_features(const Mat<T>& x_t, const PreparedCondition& pc, const Networks<T>& nets) {
  require(pc.object.has_value(), ErrorCode::MissingObject, "interaction branch needs an object");
  return interaction_features_from_sample(x_t.template cast<double>(), *nets.stats, *pc.object, *nets.skeleton)
      .template cast<T>();
}

template <class T>
struct Anchors {
  Mat<T> x_int, x_cospeech, x_uncond;
  Mat<T> r_int, r_cospeech;  // conditioned minus unconditioned
};

// Three passes: base only, interaction only, co-speech only.
template <class T>
Anchors<T> fusion_anchors(const Mat<T>& x_t, int t, int T_steps, const PreparedCondition& pc, const Networks<T>& nets) {
  require(pc.object && pc.speech_feats && nets.interaction && nets.cospeech, ErrorCode::MissingCondition,
          "fusion needs both an object and speech, and both branches");
  Anchors<T> a;
  a.x_uncond = mdm_forward<T>(x_t, t, T_steps, pc.base, *nets.mdm);
  a.x_int = adapted_forward<T>(x_t, t, T_steps, pc.base, *nets.mdm, *nets.interaction, interaction_features(x_t, pc, nets));
  const Mat<T> sf = pc.speech_feats->template cast<T>();
  a.x_cospeech = adapted_forward<T>(x_t, t, T_steps, pc.base, *nets.mdm, *nets.cospeech, sf);
  a.r_int = a.x_int - a.x_uncond;
  a.r_cospeech = a.x_cospeech - a.x_uncond;
  return a;
}

struct SampleOptions {
  Eigen::Index n_frames = 48;
  double fps = 20.0;
  std::uint64_t seed = 0;
  FusionConfig fusion;
  bool use_interaction = true;  // ignore a branch even if its condition is present
  bool use_cospeech = true;
};

struct SampleResult {
  MotionClip clip;  // denormalized
  std::vector<std::pair<double, double>> lambdas;  // (lambda_int, lambda_cospeech) used at each step, t = T-1..0
};

template <class T>
SampleResult sample_full(const ConditionBundle& bundle, const Networks<T>& nets, const NoiseSchedule& sched,
                         const SampleOptions& opt) {
  require(nets.mdm && nets.stats, ErrorCode::MissingPrereq, "sampling needs a base model and its stats");
  require(opt.n_frames > 0 && opt.fps > 0, ErrorCode::InvalidArgument, "need n_frames > 0 and fps > 0");
  const PreparedCondition pc = prepare_condition(bundle, nets, opt.n_frames, opt.fps);
  const bool use_int = opt.use_interaction && pc.object.has_value();
  const bool use_cs = opt.use_cospeech && pc.speech_feats.has_value();
  require(!use_int || nets.interaction, ErrorCode::MissingPrereq, "object condition without an interaction branch");
  require(!use_cs || nets.cospeech, ErrorCode::MissingPrereq, "speech condition without a co-speech branch");

  Rng rng(opt.seed);
  Mat<T> x(opt.n_frames, kFrameDim);
  rng.fill_normal(x, 1.0);
  FusionState fs = FusionState::from_config(opt.fusion);

  SampleResult res;
  for (int t = sched.T - 1; t >= 0; --t) {
    Mat<T> x0;
    if (use_int && use_cs) {
      const Anchors<T> a = fusion_anchors(x, t, sched.T, pc, nets);
      const Mat<T> r_cs = normalize_cospeech_residual(a.r_cospeech, a.r_int);
      const Mat<T> rs[2] = {a.r_int, r_cs};
      const double ls[2] = {fs.lambda_int, fs.lambda_cospeech};
      x0 = guided_prediction<T>(a.x_uncond, rs, ls);
      res.lambdas.emplace_back(fs.lambda_int, fs.lambda_cospeech);
      if (opt.fusion.adaptive) fs = adaptive_fusion_update(x0, a.x_int, a.x_cospeech, a.r_int, r_cs, fs);
    } else if (use_int || use_cs) {
      const Mat<T> uncond = mdm_forward<T>(x, t, sched.T, pc.base, *nets.mdm);
      const Mat<T> feats = use_int ? interaction_features(x, pc, nets) : pc.speech_feats->template cast<T>();
      const Mat<T> cond =
          adapted_forward<T>(x, t, sched.T, pc.base, *nets.mdm, use_int ? *nets.interaction : *nets.cospeech, feats);
      const Mat<T> rs[1] = {cond - uncond};
      const double ls[1] = {use_int ? fs.lambda_int : fs.lambda_cospeech};
      x0 = guided_prediction<T>(uncond, rs, ls);
      res.lambdas.emplace_back(use_int ? fs.lambda_int : 0.0, use_cs ? fs.lambda_cospeech : 0.0);
    } else {
      x0 = mdm_forward<T>(x, t, sched.T, pc.base, *nets.mdm);
      res.lambdas.emplace_back(0.0, 0.0);
    }
    Mat<T> noise;
    if (t > 0) {
      noise.resize(x.rows(), x.cols());
      rng.fill_normal(noise, 1.0);
    }
    x = p_sample_step<T>(x, t, x0, sched, noise);
  }

  MotionClip c;
  c.frames = x.template cast<double>();
  c.fps = opt.fps;
  c.normalized = true;
  c.stats_id = nets.stats->id;
  res.clip = denormalize(c, *nets.stats);
  return res;
}

}  // namespace modmo
