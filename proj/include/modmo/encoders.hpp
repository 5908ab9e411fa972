#pragma once

// Condition encoders: hashed prompt embedding, goal features, per-frame
// speech (audio + transcript) features, per-frame BPS interaction features,
// and the small trainable encoders that map them into the branch width.

#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include "modmo/audio.hpp"
#include "modmo/geometry.hpp"
#include "modmo/nn.hpp"
#include "modmo/pose.hpp"

namespace modmo {

inline constexpr int kCondDim = 64;
inline constexpr int kTextDim = 16;
inline constexpr int kGoalFeatureDim = 5;

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Dense pseudo-random vector keyed by the token hash.
inline VecD token_vector(const std::string& token, int dim, std::uint64_t seed) {
  Rng rng(fnv1a(token, seed));
  VecD v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  return v;
}

inline constexpr std::uint64_t kPromptHashSeed = 0x5eed'0001;
inline constexpr std::uint64_t kTextHashSeed = 0x5eed'0002;

// Bag-of-tokens embedding, L2-normalized.
inline VecD prompt_embed(const std::string& text, int dim = kCondDim) {
  const auto toks = tokenize(text);
  require(!toks.empty(), ErrorCode::EmptyPrompt, "prompt has no tokens");
  VecD v = VecD::Zero(dim);
  for (const auto& t : toks) v += token_vector(t, dim, kPromptHashSeed);
  const double n = v.norm();
  require(n > 0, ErrorCode::EmptyPrompt, "prompt embedding vanished");
  return v / n;
}

// Unit-norm embedding of a single transcript token.
inline VecD word_embed(const std::string& token, int dim = kTextDim) {
  VecD v = token_vector(token, dim, kTextHashSeed);
  return v / v.norm();
}

struct GoalSpec {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();  // ground plane (m)
  double height = 0.0;                                  // pelvis height (m)
  double heading = 0.0;                                 // (-pi, pi]
};

// (x, y, height, cos heading, sin heading)
inline VecD goal_features(const GoalSpec& g) {
  VecD f(kGoalFeatureDim);
  f << g.position.x(), g.position.y(), g.height, std::cos(g.heading), std::sin(g.heading);
  return f;
}

inline GoalSpec goal_from_features(const VecD& f) {
  require(f.size() == kGoalFeatureDim, ErrorCode::ShapeMismatch, "goal features must have 5 entries");
  GoalSpec g;
  g.position = {f(0), f(1)};
  g.height = f(2);
  g.heading = std::atan2(f(4), f(3));
  return g;
}

template <class T>
VecD goal_embed(const GoalSpec& g, const nn::Linear<T>& proj) {
  const Mat<T> f = goal_features(g).transpose().cast<T>();
  return proj.forward(f).row(0).transpose().template cast<double>();
}

// Per-frame text features: frame k (time k / fps) takes the embedding of the
// token whose [start, end) interval contains it, zero otherwise.
inline MatD text_features(const SpeechInput& speech, double fps, Eigen::Index n_frames, int d_txt = kTextDim) {
  validate_transcript(speech);
  MatD out = MatD::Zero(n_frames, d_txt);
  for (const auto& tok : speech.transcript) {
    const VecD e = word_embed(tok.token, d_txt);
    for (Eigen::Index k = 0; k < n_frames; ++k) {
      const double t = static_cast<double>(k) / fps;
      if (t >= tok.start_s && t < tok.end_s) out.row(k) = e.transpose();
    }
  }
  return out;
}

// Raw speech condition per motion frame: scaled log band energies
// ((E - floor) / |floor|), RMS, then the text features.
inline MatD speech_condition_features(const SpeechInput& speech, double fps, Eigen::Index n_frames) {
  const MatD audio = audio_features(speech, fps, {}, n_frames);
  const MatD text = text_features(speech, fps, n_frames);
  MatD out(n_frames, audio.cols() + text.cols());
  out.leftCols(kDefaultBands) = (audio.leftCols(kDefaultBands).array() - kLogEnergyFloor) / -kLogEnergyFloor;
  out.col(kDefaultBands) = audio.col(kDefaultBands);
  out.rightCols(text.cols()) = text;
  return out;
}

inline constexpr int kSpeechFeatureDim = kDefaultBands + 1 + kTextDim;

// Object geometry features are shared by every frame; interaction features
// come from each frame's joints. Row k = [obj_feat, inter_feat(joints_k)].
inline MatD interaction_condition_features(const VecD& object_feats, const BasisPointSet& bps,
                                           std::span<const JointPositions> joints) {
  const Eigen::Index nb = object_feats.size();
  MatD out(static_cast<Eigen::Index>(joints.size()), 2 * nb);
  for (std::size_t k = 0; k < joints.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)).head(nb) = object_feats.transpose();
    out.row(static_cast<Eigen::Index>(k)).tail(nb) = bps_interaction_features(bps, joints[k]).transpose();
  }
  return out;
}

// Joints of every frame of a denormalized (possibly noisy) clip.
inline std::vector<JointPositions> clip_joints(const MotionClip& clip, const Skeleton& sk) {
  std::vector<JointPositions> out;
  for (const auto& fk : clip_kinematics(clip, sk)) out.push_back(fk.pos);
  return out;
}

// Per-object precomputation for the interaction condition.
struct ObjectContext {
  ObjectGeometry object;
  BasisPointSet bps;  // fitted to the object's bounding sphere
  VecD object_feats;

  ObjectContext() = default;
  ObjectContext(ObjectGeometry obj, const BasisPointSet& canonical)
      : object(std::move(obj)), bps(bps_fit_to_object(canonical, object)), object_feats(bps_object_features(bps, object)) {}
};

// Interaction condition for a normalized noisy sample: denormalize, run FK,
// measure BPS-to-joint distances.
inline MatD interaction_features_from_sample(const MatD& x_norm, const NormStats& stats, const ObjectContext& ctx,
                                             const Skeleton& sk = default_skeleton()) {
  MotionClip c;
  c.frames = (x_norm.array().rowwise() * stats.std.transpose().array()).matrix().rowwise() + stats.mean.transpose();
  c.normalized = false;
  const auto joints = clip_joints(c, sk);
  return interaction_condition_features(ctx.object_feats, ctx.bps, joints);
}

enum class BranchKind { Interaction, CoSpeech };

inline std::string_view to_string(BranchKind k) { return k == BranchKind::Interaction ? "interaction" : "cospeech"; }

// Trainable encoder E_k: one linear layer (speech) or a two-layer MLP with
// GELU (BPS merge).
template <class T>
struct FeatureEncoder {
  std::vector<nn::Linear<T>> layers;

  FeatureEncoder() = default;
  FeatureEncoder(BranchKind kind, int d_in, int d_out) {
    if (kind == BranchKind::CoSpeech) {
      layers.emplace_back(d_in, d_out);
    } else {
      layers.emplace_back(d_in, d_out);
      layers.emplace_back(d_out, d_out);
    }
  }

  void init(Rng& rng) {
    for (auto& l : layers) l.init(rng);
  }

  struct Cache {
    std::vector<Mat<T>> inputs;  // input of each layer
    std::vector<Mat<T>> pre;     // pre-activation of hidden layers
  };

  Mat<T> forward(const Mat<T>& x, Cache* cache) const {
    Mat<T> h = x;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      Mat<T> z = layers[i].forward(h);
      if (i + 1 < layers.size()) {
        if (cache) cache->pre.push_back(z);
        h = nn::gelu(z);
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  void backward(const Cache& c, const Mat<T>& dy, FeatureEncoder* grad) const {
    Mat<T> d = dy;
    for (std::size_t i = layers.size(); i-- > 0;) {
      Mat<T> dx;
      layers[i].backward(c.inputs[i], d, grad ? &grad->layers[i] : nullptr, i > 0 ? &dx : nullptr);
      if (i > 0) d = nn::gelu_backward(c.pre[i - 1], dx);
    }
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].for_each(prefix + ".l" + std::to_string(i), f);
  }
};

// Per-frame joint audio-text feature: linear(concat(audio, text)).
template <class T>
Mat<T> speech_content_encode(const MatD& audio_feat, const MatD& text_feat, const FeatureEncoder<T>& enc) {
  require(audio_feat.rows() == text_feat.rows(), ErrorCode::LengthMismatch,
          "audio and text feature sequences differ in length");
  MatD cat(audio_feat.rows(), audio_feat.cols() + text_feat.cols());
  cat << audio_feat, text_feat;
  return enc.forward(cat.cast<T>(), nullptr);
}

// Per-frame BPS merge: MLP(concat(object_feats, interaction_feats(frame))).
template <class T>
Mat<T> interaction_encode(std::span<const JointPositions> joints, const ObjectContext* ctx,
                          const FeatureEncoder<T>& enc) {
  require(ctx != nullptr, ErrorCode::MissingObject, "interaction encoder needs an object");
  return enc.forward(interaction_condition_features(ctx->object_feats, ctx->bps, joints).cast<T>(), nullptr);
}

struct ConditionBundle {
  std::string prompt_text;
  VecD prompt;  // d_cond; all-zero means "no prompt" (null condition)
  std::optional<GoalSpec> goal;
  std::optional<ObjectGeometry> object;
  std::optional<SpeechInput> speech;

  bool has_interaction() const { return object.has_value(); }
  bool has_cospeech() const { return speech.has_value(); }

  static ConditionBundle from_prompt(const std::string& text) {
    ConditionBundle b;
    b.prompt_text = text;
    b.prompt = prompt_embed(text);
    return b;
  }

  static ConditionBundle null() {
    ConditionBundle b;
    b.prompt = VecD::Zero(kCondDim);
    return b;
  }
};

}  // namespace modmo
