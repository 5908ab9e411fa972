#pragma once

// Three-stage training: base model with L_rec and condition dropout, then
// each branch on top of the frozen base model.

#include <functional>
#include <optional>
#include <vector>

#include "modmo/checkpoint.hpp"
#include "modmo/config.hpp"
#include "modmo/corpus.hpp"
#include "modmo/losses.hpp"
#include "modmo/optim.hpp"
#include "modmo/sampler.hpp"

namespace modmo {

using Real = float;  // training and sampling precision

struct TrainItem {
  std::string id;
  MatD x0;  // normalized
  CondInput cond;
  std::optional<ObjectContext> object;
  std::optional<MatD> speech_feats;
  MotionTag tag = MotionTag::None;
};

inline int branch_input_dim(Stage s, int n_bps) {
  require(s != Stage::Mdm, ErrorCode::InvalidArgument, "the base model has no branch");
  return s == Stage::Interaction ? 2 * n_bps : kSpeechFeatureDim;
}

// Stage 1 takes every clip; stage 2 the clips with an object and a sitting
// tag; stage 3 the clips with speech.
inline std::vector<TrainItem> build_train_items(const std::vector<LoadedEntry>& entries, const NormStats& stats,
                                                Stage stage, const BasisPointSet& canonical) {
  std::vector<TrainItem> out;
  double fps = 0;
  for (const auto& le : entries) {
    if (stage == Stage::Interaction && (!le.object || le.entry->tag == MotionTag::None)) continue;
    if (stage == Stage::CoSpeech && !le.speech) continue;
    require(fps == 0 || le.clip.fps == fps, ErrorCode::DataMismatch, "training clips differ in fps");
    fps = le.clip.fps;
    TrainItem it;
    it.id = le.entry->id;
    it.x0 = normalize(le.clip, stats).frames;
    it.cond = CondInput::from_bundle(le.bundle());
    it.tag = le.entry->tag;
    if (stage == Stage::Interaction) it.object.emplace(*le.object, canonical);
    if (stage == Stage::CoSpeech) it.speech_feats = speech_condition_features(*le.speech, le.clip.fps, it.x0.rows());
    out.push_back(std::move(it));
  }
  require(!out.empty(), ErrorCode::DataMismatch,
          "no training clips carry the data stage " + std::string(to_string(stage)) + " needs");
  return out;
}

struct TrainState {
  Stage stage = Stage::Mdm;
  MdmParams<Real> mdm;
  std::optional<BranchParams<Real>> branch;
  AdamWState<Real> opt;
  long step = 0;

  std::vector<nn::ParamRef<Real>> trainable() { return branch ? branch->params() : mdm.params(); }
};

inline TrainState init_mdm_state(const RunConfig& rc) {
  TrainState st;
  st.stage = Stage::Mdm;
  st.mdm = MdmParams<Real>(rc.model);
  st.mdm.init(derive_seed(rc.seed, 0x10));
  return st;
}

inline TrainState init_branch_state(const RunConfig& rc, Stage stage, MdmParams<Real> base) {
  require(stage != Stage::Mdm, ErrorCode::InvalidArgument, "branch stages are interaction and cospeech");
  TrainState st;
  st.stage = stage;
  st.mdm = std::move(base);
  const BranchKind kind = stage == Stage::Interaction ? BranchKind::Interaction : BranchKind::CoSpeech;
  st.branch.emplace(kind, branch_input_dim(stage, rc.n_bps), st.mdm.cfg);
  st.branch->init(derive_seed(rc.seed, stage == Stage::Interaction ? 0x20 : 0x30), st.mdm.cfg);
  return st;
}

namespace detail {

inline std::uint64_t stage_stream(Stage s) { return s == Stage::Mdm ? 0x100 : s == Stage::Interaction ? 0x200 : 0x300; }

template <class Model>
void add_into(Model& acc, Model& g) {
  auto a = acc.params();
  auto b = g.params();
  for (std::size_t i = 0; i < a.size(); ++i) *a[i].value += *b[i].value;
}

}  // namespace detail

// One optimizer step on a seeded minibatch. The draws depend only on
// (seed, stage, step), so a resumed run repeats the same batches.
inline LossBreakdown train_step(TrainState& st, std::span<const TrainItem> items, const RunConfig& rc,
                                const NoiseSchedule& sched, const NormStats& stats) {
  require(!items.empty(), ErrorCode::DataMismatch, "no training items");
  const StageTrainConfig& sc = rc.stage(st.stage);
  const bool train_mdm = st.stage == Stage::Mdm;
  require(train_mdm != st.branch.has_value(), ErrorCode::InvalidArgument, "state does not match its stage");

  Rng rng(derive_seed(derive_seed(rc.seed, detail::stage_stream(st.stage)), static_cast<std::uint64_t>(st.step)));
  LossWeights w = rc.loss;
  if (st.stage != Stage::Interaction) w.w_pelvis = w.w_contact = w.w_collision = 0.0;

  std::optional<MdmParams<Real>> gm;
  std::optional<BranchParams<Real>> gb;
  LossBreakdown mean;
  const double inv_b = 1.0 / sc.batch;

  for (int b = 0; b < sc.batch; ++b) {
    const TrainItem& it = items[rng.below(items.size())];
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
    const Mat<Real> x0 = it.x0.cast<Real>();
    Mat<Real> eps(x0.rows(), x0.cols());
    rng.fill_normal(eps, 1.0);
    CondInput cond = it.cond;
    if (rng.uniform() < sc.goal_dropout) cond.goal_feat.reset();
    if (rng.uniform() < sc.cond_dropout) cond.drop = true;

    const Mat<Real> x_t = q_sample<Real>(x0, t, eps, sched);
    ForwardTrace<Real> trace;
    Mat<Real> pred;
    if (st.stage == Stage::Mdm) {
      pred = mdm_forward<Real>(x_t, t, sched.T, cond, st.mdm, &trace);
    } else {
      Mat<Real> feats;
      if (st.stage == Stage::Interaction) {
        require(it.object.has_value(), ErrorCode::DataMismatch, it.id + " has no object");
        feats = interaction_features_from_sample(x_t.cast<double>(), stats, *it.object).cast<Real>();
      } else {
        require(it.speech_feats.has_value(), ErrorCode::DataMismatch, it.id + " has no speech");
        feats = it.speech_feats->cast<Real>();
      }
      pred = adapted_forward<Real>(x_t, t, sched.T, cond, st.mdm, *st.branch, feats, &trace);
    }

    LossContext ctx;
    ctx.stats = &stats;
    ctx.object = it.object ? &it.object->object : nullptr;
    std::vector<int> mask;
    if (st.stage == Stage::Interaction)
      mask = select_supervision_frames(it.tag, static_cast<int>(x0.rows()), std::min<int>(w.k_frames, x0.rows()));
    Mat<Real> grad;
    const LossBreakdown l = loss_sw<Real>(pred, x0, ctx, mask, w, &grad);
    mean.rec += l.rec * inv_b;
    mean.pelvis += l.pelvis * inv_b;
    mean.contact += l.contact * inv_b;
    mean.collision += l.collision * inv_b;
    mean.total += l.total * inv_b;

    grad *= static_cast<Real>(inv_b);
    Gradients<Real> g = backward<Real>(grad, &trace, st.mdm, st.branch ? &*st.branch : nullptr, train_mdm);
    if (train_mdm) {
      if (!gm) gm = std::move(*g.mdm);
      else detail::add_into(*gm, *g.mdm);
    } else {
      if (!gb) gb = std::move(*g.branch);
      else detail::add_into(*gb, *g.branch);
    }
  }

  auto params = st.trainable();
  auto grads = train_mdm ? gm->params() : gb->params();
  adamw_step(params, grads, st.opt, sc.opt);
  ++st.step;
  return mean;
}

struct LossRecord {
  long step = 0;
  LossBreakdown loss;
};

// Runs until st.step reaches the stage's step budget.
inline std::vector<LossRecord> train_stage(TrainState& st, std::span<const TrainItem> items, const RunConfig& rc,
                                           const NormStats& stats,
                                           const std::function<void(const LossRecord&)>& on_step = {}) {
  const NoiseSchedule sched = rc.noise_schedule();
  std::vector<LossRecord> log;
  const long target = rc.stage(st.stage).steps;
  while (st.step < target) {
    LossRecord r;
    r.step = st.step;
    r.loss = train_step(st, items, rc, sched, stats);
    if (on_step) on_step(r);
    log.push_back(r);
  }
  return log;
}

// Mean of the first and last `window` entries.
inline std::pair<double, double> smoothed_ends(const std::vector<double>& v, std::size_t window) {
  require(!v.empty() && window > 0, ErrorCode::InvalidArgument, "need a non-empty series");
  window = std::min(window, v.size());
  double a = 0, b = 0;
  for (std::size_t i = 0; i < window; ++i) {
    a += v[i];
    b += v[v.size() - 1 - i];
  }
  return {a / window, b / window};
}

inline std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string s = "step,rec,pelvis,contact,collision,total\n";
  for (const auto& r : log)
    s += std::to_string(r.step) + "," + format_double(r.loss.rec) + "," + format_double(r.loss.pelvis) + "," +
         format_double(r.loss.contact) + "," + format_double(r.loss.collision) + "," + format_double(r.loss.total) +
         "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Base checkpoint: mdm.* arrays, opt.m.* / opt.v.* optimizer moments.
// Branch checkpoint: branch.<kind>.* arrays plus moments; meta.base_hash ties
// it to the base parameters it was trained on.

inline constexpr int kModelFormatVersion = 1;

inline Checkpoint make_checkpoint(TrainState& st, const RunConfig& rc, const NormStats& stats) {
  Checkpoint ck;
  ck.meta = {{"format_version", kModelFormatVersion},
             {"stage", to_string(st.stage)},
             {"step", st.step},
             {"opt_step", st.opt.step},
             {"config", rc.to_json()},
             {"stats", stats_to_json(stats)},
             {"base_hash", hex64(param_hash<Real>(st.mdm))}};
  if (st.branch) {
    ck.meta["branch_input_dim"] = st.branch->d_in;
    store_params<Real>(ck, *st.branch);
  } else {
    store_params<Real>(ck, st.mdm);
  }
  auto ps = st.trainable();
  if (!st.opt.m.empty()) {
    require(st.opt.m.size() == ps.size(), ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ck.put("opt.m." + ps[i].name, st.opt.m[i]);
      ck.put("opt.v." + ps[i].name, st.opt.v[i]);
    }
  }
  return ck;
}

struct ModelInfo {
  Stage stage = Stage::Mdm;
  long step = 0;
  RunConfig config;
  NormStats stats;
  std::string base_hash;
};

inline ModelInfo checkpoint_info(const Checkpoint& ck) {
  ModelInfo mi;
  try {
    require(ck.meta.at("format_version").get<int>() == kModelFormatVersion, ErrorCode::Format,
            "unsupported checkpoint version");
    mi.stage = parse_stage(ck.meta.at("stage").get<std::string>());
    mi.step = ck.meta.at("step").get<long>();
    mi.config = RunConfig::from_json(ck.meta.at("config"));
    mi.stats = stats_from_json(ck.meta.at("stats"));
    mi.base_hash = ck.meta.at("base_hash").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad checkpoint meta: ") + e.what());
  }
  return mi;
}

namespace detail {

inline void load_moments(const Checkpoint& ck, TrainState& st) {
  auto ps = st.trainable();
  st.opt = {};
  st.opt.step = ck.meta.value("opt_step", 0L);
  if (ck.find("opt.m." + ps.front().name) == nullptr) return;
  for (const auto& p : ps) {
    const MatD& m = ck.at("opt.m." + p.name);
    const MatD& v = ck.at("opt.v." + p.name);
    require(m.rows() == p.value->rows() && m.cols() == p.value->cols() && v.rows() == m.rows() &&
                v.cols() == m.cols(),
            ErrorCode::ShapeMismatch, "optimizer moments for " + p.name + " have the wrong shape");
    st.opt.m.push_back(m.cast<Real>());
    st.opt.v.push_back(v.cast<Real>());
  }
}

}  // namespace detail

inline TrainState load_mdm_state(const Checkpoint& ck) {
  const ModelInfo mi = checkpoint_info(ck);
  require(mi.stage == Stage::Mdm, ErrorCode::MissingPrereq, "expected a base model checkpoint, got " +
                                                                std::string(to_string(mi.stage)));
  TrainState st;
  st.stage = Stage::Mdm;
  st.mdm = MdmParams<Real>(mi.config.model);
  load_params<Real>(ck, st.mdm);
  st.step = mi.step;
  detail::load_moments(ck, st);
  require(hex64(param_hash<Real>(st.mdm)) == mi.base_hash, ErrorCode::Format, "base model arrays fail their hash");
  return st;
}

// Attaches a branch checkpoint to its base model.
inline TrainState load_branch_state(const Checkpoint& ck, MdmParams<Real> base) {
  const ModelInfo mi = checkpoint_info(ck);
  require(mi.stage != Stage::Mdm, ErrorCode::InvalidArgument, "expected a branch checkpoint");
  require(hex64(param_hash<Real>(base)) == mi.base_hash, ErrorCode::DataMismatch,
          "branch was trained on a different base model");
  TrainState st = init_branch_state(mi.config, mi.stage, std::move(base));
  require(ck.meta.value("branch_input_dim", -1) == st.branch->d_in, ErrorCode::ShapeMismatch,
          "branch input width differs from the config");
  load_params<Real>(ck, *st.branch);
  st.step = mi.step;
  detail::load_moments(ck, st);
  return st;
}

// ---------------------------------------------------------------------------
// Trained models for sampling

struct TrainedModels {
  RunConfig config;  // from the base checkpoint
  NormStats stats;
  MdmParams<Real> mdm;
  std::optional<BranchParams<Real>> interaction, cospeech;
  BasisPointSet canonical_bps;
  std::string base_hash;

  Networks<Real> networks() const {
    Networks<Real> n;
    n.mdm = &mdm;
    n.interaction = interaction ? &*interaction : nullptr;
    n.cospeech = cospeech ? &*cospeech : nullptr;
    n.stats = &stats;
    n.canonical_bps = &canonical_bps;
    return n;
  }
};

// Any order; exactly one base checkpoint, at most one branch of each kind.
inline TrainedModels load_models(const std::vector<std::string>& paths) {
  require(!paths.empty(), ErrorCode::MissingPrereq, "need at least a base model checkpoint");
  std::vector<Checkpoint> cks;
  for (const auto& p : paths) cks.push_back(read_checkpoint(p));
  TrainedModels tm;
  int n_base = 0;
  for (const auto& ck : cks)
    if (checkpoint_info(ck).stage == Stage::Mdm) {
      ++n_base;
      const ModelInfo mi = checkpoint_info(ck);
      tm.config = mi.config;
      tm.stats = mi.stats;
      tm.mdm = load_mdm_state(ck).mdm;
      tm.base_hash = mi.base_hash;
    }
  require(n_base == 1, ErrorCode::MissingPrereq, "exactly one base model checkpoint is required");
  tm.canonical_bps = tm.config.canonical_bps();
  for (const auto& ck : cks) {
    const ModelInfo mi = checkpoint_info(ck);
    if (mi.stage == Stage::Mdm) continue;
    require(mi.stats.id == tm.stats.id, ErrorCode::StatsMismatch, "branch and base were trained on different stats");
    TrainState st = load_branch_state(ck, tm.mdm);
    auto& slot = mi.stage == Stage::Interaction ? tm.interaction : tm.cospeech;
    require(!slot.has_value(), ErrorCode::InvalidArgument, "two checkpoints for the same branch");
    slot = std::move(st.branch);
    if (mi.stage == Stage::Interaction)
      require(mi.config.n_bps == tm.config.n_bps && mi.config.bps_seed == tm.config.bps_seed, ErrorCode::DataMismatch,
              "interaction branch uses a different basis point set");
  }
  return tm;
}

}  // namespace modmo
