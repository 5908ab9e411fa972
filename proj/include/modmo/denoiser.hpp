#pragma once

// Base motion denoiser (IN -> 8 transformer blocks -> OUT) and adaptation
// branches injected block by block.
//
// Token sequence: row 0 is the condition token cond_proj([prompt + goal, time]),
// rows 1..N are in_proj(frame). Sinusoidal position codes are added to all
// rows. OUT reads rows 1..N only.
//
// With a branch attached (per-block gates g_1..g_8, row 0 masked):
//   c_0 = [0; E(C) + pe]        H_0 = IN(X_t)
//   H_1 = L_M1(H_0)             c_1 = L_k1(c_0)
//   H_j = L_Mj(H_{j-1} + g_{j-1} * c_{j-1}),  c_j = L_kj(c_{j-1})   j = 2..8
//   X0  = OUT(H_8 + g_8 * c_8)
// The gates start at zero, so an untrained branch leaves the base prediction
// unchanged; all-ones gates give the plain additive recurrence.

#include <optional>
#include <vector>

#include "modmo/encoders.hpp"
#include "modmo/nn.hpp"
#include "modmo/pose.hpp"

namespace modmo {

struct DenoiserConfig {
  int d_model = 64;
  int heads = 4;
  int ff_mult = 4;
  int n_blocks = 8;
  int d_cond = kCondDim;
  int d_time = 64;
  int frame_dim = kFrameDim;

  int d_ff() const { return d_model * ff_mult; }

  void validate() const {
    require(d_model > 0 && heads > 0 && d_model % heads == 0, ErrorCode::InvalidArgument,
            "d_model must be a positive multiple of heads");
    require(n_blocks >= 1 && d_cond > 0 && d_time > 0 && frame_dim > 0 && ff_mult > 0, ErrorCode::InvalidArgument,
            "bad denoiser dimensions");
  }

  bool operator==(const DenoiserConfig&) const = default;
};

inline VecD time_embed(int t, int T, int d_time) {
  require(t >= 0 && t < T, ErrorCode::StepOutOfRange, "diffusion step " + std::to_string(t) + " outside [0, T)");
  return nn::sinusoid(static_cast<double>(t), d_time);
}

template <class T>
struct MdmParams {
  DenoiserConfig cfg;
  nn::Linear<T> in_proj, out_proj, cond_proj, goal_proj;
  std::vector<nn::Block<T>> blocks;

  MdmParams() = default;
  explicit MdmParams(const DenoiserConfig& c)
      : cfg(c),
        in_proj(c.frame_dim, c.d_model),
        out_proj(c.d_model, c.frame_dim),
        cond_proj(c.d_cond + c.d_time, c.d_model),
        goal_proj(kGoalFeatureDim, c.d_cond) {
    c.validate();
    for (int i = 0; i < c.n_blocks; ++i) blocks.emplace_back(c.d_model, c.heads, c.d_ff());
  }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    const double rg = 1.0 / std::sqrt(2.0 * cfg.n_blocks);
    in_proj.init(rng);
    cond_proj.init(rng);
    goal_proj.init(rng);
    for (auto& b : blocks) b.init(rng, rg);
    out_proj.init(rng);
  }

  template <class F>
  void for_each(F&& f) {
    in_proj.for_each("mdm.in", f);
    cond_proj.for_each("mdm.cond", f);
    goal_proj.for_each("mdm.goal", f);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].for_each("mdm.block" + std::to_string(i), f);
    out_proj.for_each("mdm.out", f);
  }

  template <class U>
  MdmParams<U> cast() const {
    MdmParams<U> o(cfg);
    auto src = const_cast<MdmParams*>(this)->params();
    auto dst = o.params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<U>();
    return o;
  }

  std::vector<nn::ParamRef<T>> params() { return nn::collect_params<T>(*this); }
};

template <class T>
struct BranchParams {
  BranchKind kind = BranchKind::Interaction;
  int d_in = 0;
  FeatureEncoder<T> encoder;
  std::vector<nn::Block<T>> blocks;
  std::vector<Mat<T>> gates;  // gates[j] multiplies c_{j+1}; each 1 x d_model

  BranchParams() = default;
  BranchParams(BranchKind k, int input_dim, const DenoiserConfig& c)
      : kind(k), d_in(input_dim), encoder(k, input_dim, c.d_model) {
    for (int i = 0; i < c.n_blocks; ++i) {
      blocks.emplace_back(c.d_model, c.heads, c.d_ff());
      gates.push_back(Mat<T>::Zero(1, c.d_model));
    }
  }

  void init(std::uint64_t seed, const DenoiserConfig& c) {
    Rng rng(seed);
    encoder.init(rng);
    for (auto& b : blocks) b.init(rng, 1.0 / std::sqrt(2.0 * c.n_blocks));
    for (auto& g : gates) g.setZero();
  }

  template <class F>
  void for_each(F&& f) {
    const std::string p = std::string("branch.") + std::string(to_string(kind));
    encoder.for_each(p + ".enc", f);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].for_each(p + ".block" + std::to_string(i), f);
    for (std::size_t i = 0; i < gates.size(); ++i) f(p + ".gate" + std::to_string(i), gates[i]);
  }

  template <class U>
  BranchParams<U> cast() const {
    BranchParams<U> o;
    o.kind = kind;
    o.d_in = d_in;
    o.encoder.layers.resize(encoder.layers.size());
    for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
      o.encoder.layers[i].W = encoder.layers[i].W.template cast<U>();
      o.encoder.layers[i].b = encoder.layers[i].b.template cast<U>();
    }
    o.blocks.resize(blocks.size());
    auto src = const_cast<BranchParams*>(this)->params();
    for (std::size_t i = 0; i < blocks.size(); ++i) o.blocks[i].heads = blocks[i].heads;
    o.gates.resize(gates.size());
    // Shapes come from the source arrays.
    auto dst_names = std::vector<Mat<U>*>{};
    o.for_each([&](const std::string&, Mat<U>& m) { dst_names.push_back(&m); });
    for (std::size_t i = 0; i < src.size(); ++i) *dst_names[i] = src[i].value->template cast<U>();
    return o;
  }

  std::vector<nn::ParamRef<T>> params() { return nn::collect_params<T>(*this); }
};

// Base conditioning for the condition token.
struct CondInput {
  VecD prompt;                    // d_cond; zeros allowed
  std::optional<VecD> goal_feat;  // goal_features(goal)
  bool drop = false;              // classifier-free dropout: zero prompt + goal

  static CondInput from_bundle(const ConditionBundle& b) {
    CondInput c;
    c.prompt = b.prompt;
    if (b.goal) c.goal_feat = goal_features(*b.goal);
    return c;
  }
};

template <class T>
struct ForwardTrace {
  Mat<T> x_in;
  Mat<T> cond_in;  // 1 x (d_cond + d_time)
  Mat<T> goal_in;  // 1 x 5, empty when no goal contributes
  std::vector<typename nn::Block<T>::Cache> mdm;
  Mat<T> final_tokens;  // H_8 (+ injected c_8), rows 0..N
  bool has_branch = false;
  Mat<T> branch_in;
  typename FeatureEncoder<T>::Cache enc;
  std::vector<typename nn::Block<T>::Cache> branch;
  std::vector<Mat<T>> c;  // c_1..c_8
};

namespace detail {

template <class T>
void mask_row0(Mat<T>& m) {
  m.row(0).setZero();
}

template <class T>
Mat<T> condition_row(int t, int T_steps, const CondInput& cond, const MdmParams<T>& p, Mat<T>* goal_in) {
  const auto& cfg = p.cfg;
  require(cond.prompt.size() == cfg.d_cond, ErrorCode::ShapeMismatch, "prompt embedding has wrong dimension");
  Mat<T> row(1, cfg.d_cond + cfg.d_time);
  RowVec<T> base = cond.prompt.transpose().cast<T>();
  if (goal_in) goal_in->resize(0, 0);
  if (cond.goal_feat && !cond.drop) {
    require(cond.goal_feat->size() == kGoalFeatureDim, ErrorCode::ShapeMismatch, "goal features must have 5 entries");
    const Mat<T> gf = cond.goal_feat->transpose().cast<T>();
    base += p.goal_proj.forward(gf).row(0);
    if (goal_in) *goal_in = gf;
  }
  if (cond.drop) base.setZero();
  row.leftCols(cfg.d_cond) = base;
  row.rightCols(cfg.d_time) = time_embed(t, T_steps, cfg.d_time).transpose().template cast<T>();
  return row;
}

}  // namespace detail

// Shared forward for the base model (branch == nullptr) and the adapted model.
template <class T>
Mat<T> denoiser_forward(const Mat<T>& x_t, int t, int T_steps, const CondInput& cond, const MdmParams<T>& p,
                        const BranchParams<T>* branch, const Mat<T>* branch_features, ForwardTrace<T>* trace) {
  const auto& cfg = p.cfg;
  require(x_t.cols() == cfg.frame_dim && x_t.rows() >= 1, ErrorCode::ShapeMismatch,
          "noisy motion must be N x " + std::to_string(cfg.frame_dim));
  const Eigen::Index n = x_t.rows();
  const int nb = static_cast<int>(p.blocks.size());

  Mat<T> goal_in;
  const Mat<T> cond_row = detail::condition_row(t, T_steps, cond, p, &goal_in);
  const Mat<T> pe = nn::positional_encoding<T>(n + 1, cfg.d_model);
  Mat<T> h(n + 1, cfg.d_model);
  h.row(0) = p.cond_proj.forward(cond_row).row(0);
  h.bottomRows(n) = p.in_proj.forward(x_t);
  h += pe;

  std::vector<typename nn::Block<T>::Cache> local_caches;
  auto& mdm_caches = trace ? trace->mdm : local_caches;
  mdm_caches.resize(static_cast<std::size_t>(nb));

  if (!branch) {
    for (int j = 0; j < nb; ++j) h = p.blocks[static_cast<std::size_t>(j)].forward(h, mdm_caches[static_cast<std::size_t>(j)]);
    if (trace) {
      trace->x_in = x_t;
      trace->cond_in = cond_row;
      trace->goal_in = goal_in;
      trace->final_tokens = h;
      trace->has_branch = false;
    }
    return p.out_proj.forward(h.bottomRows(n));
  }

  require(branch_features && branch_features->rows() == n, ErrorCode::MissingCondition,
          "branch needs one condition row per frame");
  require(branch_features->cols() == branch->d_in, ErrorCode::ShapeMismatch, "branch condition width mismatch");
  require(static_cast<int>(branch->blocks.size()) == nb, ErrorCode::ShapeMismatch, "branch depth mismatch");

  typename FeatureEncoder<T>::Cache enc_local;
  Mat<T> c(n + 1, cfg.d_model);
  c.row(0).setZero();
  c.bottomRows(n) = branch->encoder.forward(*branch_features, trace ? &trace->enc : &enc_local) + pe.bottomRows(n);

  std::vector<typename nn::Block<T>::Cache> br_local;
  auto& br_caches = trace ? trace->branch : br_local;
  br_caches.resize(static_cast<std::size_t>(nb));
  std::vector<Mat<T>> cs(static_cast<std::size_t>(nb));

  h = p.blocks[0].forward(h, mdm_caches[0]);
  c = branch->blocks[0].forward(c, br_caches[0]);
  cs[0] = c;
  for (int j = 1; j < nb; ++j) {
    Mat<T> inj = cs[static_cast<std::size_t>(j - 1)].array().rowwise() *
                 branch->gates[static_cast<std::size_t>(j - 1)].row(0).array();
    detail::mask_row0(inj);
    h = p.blocks[static_cast<std::size_t>(j)].forward(h + inj, mdm_caches[static_cast<std::size_t>(j)]);
    c = branch->blocks[static_cast<std::size_t>(j)].forward(c, br_caches[static_cast<std::size_t>(j)]);
    cs[static_cast<std::size_t>(j)] = c;
  }
  Mat<T> inj = cs.back().array().rowwise() * branch->gates.back().row(0).array();
  detail::mask_row0(inj);
  h += inj;

  if (trace) {
    trace->x_in = x_t;
    trace->cond_in = cond_row;
    trace->goal_in = goal_in;
    trace->final_tokens = h;
    trace->has_branch = true;
    trace->branch_in = *branch_features;
    trace->c = std::move(cs);
  }
  return p.out_proj.forward(h.bottomRows(n));
}

template <class T>
Mat<T> mdm_forward(const Mat<T>& x_t, int t, int T_steps, const CondInput& cond, const MdmParams<T>& p,
                   ForwardTrace<T>* trace = nullptr) {
  return denoiser_forward<T>(x_t, t, T_steps, cond, p, nullptr, nullptr, trace);
}

template <class T>
Mat<T> adapted_forward(const Mat<T>& x_t, int t, int T_steps, const CondInput& cond, const MdmParams<T>& p,
                       const BranchParams<T>& branch, const Mat<T>& features, ForwardTrace<T>* trace = nullptr) {
  return denoiser_forward<T>(x_t, t, T_steps, cond, p, &branch, &features, trace);
}

template <class T>
struct Gradients {
  std::optional<MdmParams<T>> mdm;        // absent when the base model is frozen
  std::optional<BranchParams<T>> branch;  // present iff the trace has a branch
};

// Reverse pass from d(loss)/d(X0_pred). When train_mdm is false the base
// parameters are frozen and no gradient is produced for them.
template <class T>
Gradients<T> backward(const Mat<T>& d_out, const ForwardTrace<T>* trace, const MdmParams<T>& p,
                      const BranchParams<T>* branch, bool train_mdm) {
  require(trace != nullptr && !trace->mdm.empty(), ErrorCode::NoTrace, "backward needs a forward trace");
  require(trace->has_branch == (branch != nullptr), ErrorCode::NoTrace, "trace/branch mismatch");
  const Eigen::Index n = trace->x_in.rows();
  require(d_out.rows() == n && d_out.cols() == p.cfg.frame_dim, ErrorCode::ShapeMismatch, "gradient shape mismatch");
  const int nb = static_cast<int>(p.blocks.size());

  Gradients<T> g;
  if (train_mdm) g.mdm = nn::zeros_like(p);
  if (branch) g.branch = nn::zeros_like(*branch);
  MdmParams<T>* gm = g.mdm ? &*g.mdm : nullptr;
  BranchParams<T>* gb = g.branch ? &*g.branch : nullptr;

  Mat<T> dh = Mat<T>::Zero(n + 1, p.cfg.d_model);
  {
    Mat<T> dtok;
    const Mat<T> fin = trace->final_tokens.bottomRows(n);
    p.out_proj.backward(fin, d_out, gm ? &gm->out_proj : nullptr, &dtok);
    dh.bottomRows(n) = dtok;
  }

  std::vector<Mat<T>> dc;
  if (branch) {
    dc.assign(static_cast<std::size_t>(nb), Mat<T>::Zero(n + 1, p.cfg.d_model));
    const auto& c8 = trace->c.back();
    Mat<T> d = dh.array().rowwise() * branch->gates.back().row(0).array();
    detail::mask_row0(d);
    dc.back() += d;
    gb->gates.back() += (dh.bottomRows(n).array() * c8.bottomRows(n).array()).colwise().sum().matrix();
  }

  for (int j = nb - 1; j >= 1; --j) {
    const Mat<T> din = p.blocks[static_cast<std::size_t>(j)].backward(trace->mdm[static_cast<std::size_t>(j)], dh,
                                                                       gm ? &gm->blocks[static_cast<std::size_t>(j)] : nullptr);
    if (branch) {
      const auto k = static_cast<std::size_t>(j - 1);
      Mat<T> d = din.array().rowwise() * branch->gates[k].row(0).array();
      detail::mask_row0(d);
      dc[k] += d;
      gb->gates[k] += (din.bottomRows(n).array() * trace->c[k].bottomRows(n).array()).colwise().sum().matrix();
    }
    dh = din;
  }

  if (gm) {
    dh = p.blocks[0].backward(trace->mdm[0], dh, &gm->blocks[0]);
    Mat<T> dcond;
    p.cond_proj.backward(trace->cond_in, dh.topRows(1), &gm->cond_proj, &dcond);
    if (trace->goal_in.size() > 0) {
      const Mat<T> dgoal = dcond.leftCols(p.cfg.d_cond);
      p.goal_proj.backward(trace->goal_in, dgoal, &gm->goal_proj, nullptr);
    }
    p.in_proj.backward(trace->x_in, dh.bottomRows(n), &gm->in_proj, nullptr);
  }

  if (branch) {
    for (int j = nb - 1; j >= 0; --j) {
      const Mat<T> dprev = branch->blocks[static_cast<std::size_t>(j)].backward(
          trace->branch[static_cast<std::size_t>(j)], dc[static_cast<std::size_t>(j)], &gb->blocks[static_cast<std::size_t>(j)]);
      if (j > 0) {
        dc[static_cast<std::size_t>(j - 1)] += dprev;
      } else {
        branch->encoder.backward(trace->enc, dprev.bottomRows(n), &gb->encoder);
      }
    }
  }
  return g;
}

}  // namespace modmo
