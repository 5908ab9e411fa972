#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>

#include "modmo/sampler.hpp"
#include "test_util.hpp"

using namespace modmo;

namespace {

MatD rand_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST(Schedule, CosineClosedForm) {
  const auto s = NoiseSchedule::cosine(50);
  ASSERT_EQ(s.T, 50);
  auto f = [](double u) {
    const double c = std::cos((u / 50.0 + 0.008) / 1.008 * kPi / 2);
    return c * c;
  };
  for (int t = 0; t < 49; ++t) {
    EXPECT_NEAR(s.alpha_bars[static_cast<std::size_t>(t)], f(t + 1) / f(0), 1e-12);
    EXPECT_LT(s.alpha_bars[static_cast<std::size_t>(t + 1)], s.alpha_bars[static_cast<std::size_t>(t)]);
  }
  EXPECT_LT(s.alpha_bars.back(), 1e-3);
  for (double b : s.betas) EXPECT_LE(b, 0.999);
  const auto l = NoiseSchedule::linear(1000);
  EXPECT_NEAR(l.betas.front(), 1e-4, 1e-15);
  EXPECT_NEAR(l.betas.back(), 0.02, 1e-15);
  EXPECT_THROW(NoiseSchedule::cosine(0), Error);
  EXPECT_THROW(NoiseSchedule::from_betas({0.5, 1.0}), Error);
}

TEST(Schedule, PosteriorMatchesGaussianConditioning) {
  // x_{t-1} ~ N(sqrt(ab_prev) x0, 1 - ab_prev); x_t = sqrt(a_t) x_{t-1} + sqrt(b_t) e.
  // Conditioning the joint Gaussian on x_t gives the posterior.
  const auto s = NoiseSchedule::cosine(50);
  for (int t = 1; t < 50; ++t) {
    const double abp = s.alpha_bars[static_cast<std::size_t>(t - 1)];
    const double a = s.alphas[static_cast<std::size_t>(t)];
    const double var1 = 1 - abp, cov = std::sqrt(a) * var1, var_t = a * var1 + s.betas[static_cast<std::size_t>(t)];
    const double k = cov / var_t;
    // mean = sqrt(abp) x0 + k (x_t - sqrt(a) sqrt(abp) x0)
    const auto post = s.posterior(t);
    EXPECT_NEAR(post.coef_xt, k, 1e-12);
    EXPECT_NEAR(post.coef_x0, std::sqrt(abp) - k * std::sqrt(a * abp), 1e-12);
    EXPECT_NEAR(post.variance, var1 - k * cov, 1e-12);
  }
  EXPECT_THROW(s.posterior(50), Error);
}

TEST(QSample, Endpoints) {
  const auto s = NoiseSchedule::cosine(50);
  Rng rng(1);
  const MatD x0 = rand_mat(rng, 4, 6), eps = rand_mat(rng, 4, 6);
  for (int t : {0, 49}) {
    const double ab = s.alpha_bars[static_cast<std::size_t>(t)];
    EXPECT_EQ(q_sample<double>(x0, t, MatD::Zero(4, 6), s), std::sqrt(ab) * x0);
    EXPECT_EQ(q_sample<double>(MatD::Zero(4, 6), t, eps, s), std::sqrt(1 - ab) * eps);
  }
  // Nearly clean at t = 0, nearly pure noise at t = T - 1.
  EXPECT_GT(s.alpha_bars.front(), 0.99);
  EXPECT_LT(s.alpha_bars.back(), 1e-3);
  EXPECT_THROW(q_sample<double>(x0, 50, eps, s), Error);
  EXPECT_THROW(q_sample<double>(x0, 0, MatD::Zero(3, 6), s), Error);
}

TEST(Sampling, OracleDenoiserRecoversX0) {
  const auto s = NoiseSchedule::cosine(50);
  Rng rng(2);
  const MatD x0 = rand_mat(rng, 8, kFrameDim);
  MatD x = rand_mat(rng, 8, kFrameDim);
  for (int t = 49; t >= 0; --t) x = p_sample_step<double>(x, t, x0, s, MatD::Zero(8, kFrameDim));
  EXPECT_LT((x - x0).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Guidance, SuperpositionAndIdentities) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const MatD xu = rand_mat(rng, 5, 7), xa = rand_mat(rng, 5, 7), xb = rand_mat(rng, 5, 7);
    const MatD ra = xa - xu, rb = xb - xu;
    const double la = rng.uniform(-2, 4), lb = rng.uniform(-2, 4);
    const MatD rs[2] = {ra, rb};
    const double ls[2] = {la, lb};
    const MatD both = guided_prediction<double>(xu, rs, ls);
    EXPECT_LT((both - (xu + la * ra + lb * rb)).cwiseAbs().maxCoeff(), 1e-12);
    const double zero[2] = {0, 0};
    EXPECT_EQ(guided_prediction<double>(xu, rs, zero), xu);
    const MatD one_r[1] = {ra};
    const double one[1] = {1.0};
    EXPECT_LT((guided_prediction<double>(xu, one_r, one) - xa).cwiseAbs().maxCoeff(), 1e-12);
    // Superposition: the two-term sum is the sum of the one-term shifts.
    const double la1[1] = {la}, lb1[1] = {lb};
    const MatD rb1[1] = {rb};
    const MatD sum = guided_prediction<double>(xu, one_r, la1) + guided_prediction<double>(xu, rb1, lb1) - xu;
    EXPECT_LT((both - sum).cwiseAbs().maxCoeff(), 1e-12);
  }
  const MatD r1[1] = {MatD::Zero(2, 2)};
  const double l2[2] = {1, 1};
  EXPECT_THROW(guided_prediction<double>(MatD::Zero(2, 2), r1, l2), Error);
}

TEST(Guidance, CospeechResidualNormalization) {
  Rng rng(4);
  const MatD rc = rand_mat(rng, 3, 4), ri = rand_mat(rng, 3, 4);
  const MatD n = normalize_cospeech_residual<double>(rc, ri);
  EXPECT_NEAR(n.norm(), ri.norm(), 1e-12);
  EXPECT_NEAR((n / n.norm() - rc / rc.norm()).norm(), 0.0, 1e-12);
  EXPECT_EQ(normalize_cospeech_residual<double>(rc, MatD::Zero(3, 4)), rc);
}

TEST(Fusion, AnalyticGradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const MatD xu = rand_mat(rng, 4, 6), ri = rand_mat(rng, 4, 6), rc = rand_mat(rng, 4, 6);
    const MatD ai = rand_mat(rng, 4, 6), ac = rand_mat(rng, 4, 6);
    const double li = rng.uniform(0, 4), lc = rng.uniform(0, 4);
    auto fused = [&](double a, double b) { return MatD(xu + a * ri + b * rc); };
    const MatD X = fused(li, lc);
    const double h = 1e-5;
    const double fd_i = (fusion_loss<double>(fused(li + h, lc), ai) - fusion_loss<double>(fused(li - h, lc), ai)) / (2 * h);
    const double fd_c = (fusion_loss<double>(fused(li, lc + h), ac) - fusion_loss<double>(fused(li, lc - h), ac)) / (2 * h);
    EXPECT_NEAR(fusion_gradient<double>(X, ai, ri), fd_i, 1e-8);
    EXPECT_NEAR(fusion_gradient<double>(X, ac, rc), fd_c, 1e-8);
    FusionGradients g;
    FusionState st;
    adaptive_fusion_update<double>(X, ai, ac, ri, rc, st, &g);
    EXPECT_EQ(g.d_int, fusion_gradient<double>(X, ai, ri));
    EXPECT_EQ(g.d_cospeech, fusion_gradient<double>(X, ac, rc));
  }
}

TEST(Fusion, StepBelowStabilityBoundNeverIncreasesLoss) {
  Rng rng(6);
  int moved = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.below(5)), c = 1 + static_cast<Eigen::Index>(rng.below(8));
    const MatD xu = rand_mat(rng, r, c), ri = rand_mat(rng, r, c) * rng.uniform(0.01, 5);
    const MatD rc = rand_mat(rng, r, c) * rng.uniform(0.01, 5);
    const MatD ai = rand_mat(rng, r, c), ac = rand_mat(rng, r, c);
    FusionState st;
    st.lambda_min = -1e9;  // keep the clamp out of the way
    st.lambda_max = 1e9;
    st.lambda_int = rng.uniform(-2, 4);
    st.lambda_cospeech = rng.uniform(-2, 4);
    st.eta = rng.uniform(0.0, 1.0) * std::min(fusion_stability_bound<double>(ri), fusion_stability_bound<double>(rc));
    const MatD X = xu + st.lambda_int * ri + st.lambda_cospeech * rc;
    const FusionState nx = adaptive_fusion_update<double>(X, ai, ac, ri, rc, st);
    // Each lambda is scored on its own anchor with the other held fixed.
    const MatD Xi = xu + nx.lambda_int * ri + st.lambda_cospeech * rc;
    const MatD Xc = xu + st.lambda_int * ri + nx.lambda_cospeech * rc;
    EXPECT_LE(fusion_loss<double>(Xi, ai), fusion_loss<double>(X, ai) + 1e-12);
    EXPECT_LE(fusion_loss<double>(Xc, ac), fusion_loss<double>(X, ac) + 1e-12);
    if (nx.lambda_int != st.lambda_int) ++moved;
  }
  EXPECT_GT(moved, 900);
}

TEST(Fusion, StabilityBoundIsTight) {
  // Just above twice the bound the quadratic overshoots and the loss grows.
  Rng rng(7);
  const MatD xu = rand_mat(rng, 3, 3), r = rand_mat(rng, 3, 3), a = rand_mat(rng, 3, 3);
  const double bound = fusion_stability_bound<double>(r);
  const MatD X = xu + r;
  const double g = fusion_gradient<double>(X, a, r);
  const MatD over = xu + (1 - 2.05 * bound * g) * r;
  EXPECT_GT(fusion_loss<double>(over, a), fusion_loss<double>(X, a));
  EXPECT_EQ(fusion_stability_bound<double>(MatD::Zero(2, 2)), std::numeric_limits<double>::infinity());
}

TEST(Fusion, ClampsToBounds) {
  FusionConfig c;
  c.lambda_init = 9;
  const FusionState s = FusionState::from_config(c);
  EXPECT_EQ(s.lambda_int, 4.0);
  const MatD r = MatD::Constant(2, 2, 1.0), x = MatD::Zero(2, 2), anchor = MatD::Constant(2, 2, 100.0);
  // Gradient is strongly negative, so the step pushes lambda past the upper bound.
  const FusionState n = adaptive_fusion_update<double>(x, anchor, anchor, r, r, s);
  EXPECT_EQ(n.lambda_int, 4.0);
  const FusionState m = adaptive_fusion_update<double>(x, -anchor, -anchor, r, r, s);
  EXPECT_EQ(m.lambda_int, 0.0);
}

TEST(Supervision, FrameSelection) {
  EXPECT_EQ(select_supervision_frames(MotionTag::EndsSitting, 10, 3), (std::vector<int>{7, 8, 9}));
  EXPECT_EQ(select_supervision_frames(MotionTag::StartsSitting, 10, 3), (std::vector<int>{0, 1, 2}));
  EXPECT_TRUE(select_supervision_frames(MotionTag::None, 10, 3).empty());
  EXPECT_EQ(select_supervision_frames(MotionTag::EndsSitting, 4, 4).size(), 4u);
  EXPECT_THROW(select_supervision_frames(MotionTag::EndsSitting, 4, 5), Error);
  EXPECT_THROW(select_supervision_frames(MotionTag::EndsSitting, 4, 0), Error);
  EXPECT_EQ(parse_motion_tag(to_string(MotionTag::StartsSitting)), MotionTag::StartsSitting);
  EXPECT_THROW(parse_motion_tag("lying"), Error);
}

namespace {

struct TinyModels {
  DenoiserConfig cfg;
  MdmParams<double> mdm;
  BranchParams<double> inter, speech;
  NormStats stats;
  BasisPointSet bps = bps_generate(1, 16, 1.0);

  TinyModels() {
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    mdm = MdmParams<double>(cfg);
    mdm.init(1);
    inter = BranchParams<double>(BranchKind::Interaction, 32, cfg);
    inter.init(2, cfg);
    speech = BranchParams<double>(BranchKind::CoSpeech, kSpeechFeatureDim, cfg);
    speech.init(3, cfg);
    Rng rng(4);
    for (auto* b : {&inter, &speech})
      for (auto& g : b->gates)
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal() * 0.3;
    stats.std.setConstant(0.1);
    stats.id = "tiny";
  }

  Networks<double> nets(bool with_branches) const {
    Networks<double> n;
    n.mdm = &mdm;
    n.stats = &stats;
    n.canonical_bps = &bps;
    if (with_branches) {
      n.interaction = &inter;
      n.cospeech = &speech;
    }
    return n;
  }
};

ConditionBundle full_bundle() {
  ConditionBundle b = ConditionBundle::from_prompt("a person sits down");
  ObjectGeometry o;
  o.primitives.push_back(Box{Vec3(1, 0, 0.3), Vec3(0.25, 0.25, 0.3), Mat3::Identity()});
  b.object = o;
  SpeechInput s;
  s.samples.assign(8000, 0.0);
  for (std::size_t i = 2000; i < 3000; ++i) s.samples[i] = std::sin(0.3 * static_cast<double>(i));
  s.transcript = {{"hello", 0.1, 0.3}};
  b.speech = s;
  return b;
}

}  // namespace

TEST(Sampler, DeterministicAndRecordsLambdas) {
  const TinyModels m;
  const auto sched = NoiseSchedule::cosine(6);
  SampleOptions opt;
  opt.n_frames = 6;
  opt.seed = 42;
  const auto a = sample_full<double>(full_bundle(), m.nets(true), sched, opt);
  const auto b = sample_full<double>(full_bundle(), m.nets(true), sched, opt);
  EXPECT_EQ(a.clip.frames, b.clip.frames);
  EXPECT_FALSE(a.clip.normalized);
  ASSERT_EQ(a.lambdas.size(), 6u);
  EXPECT_EQ(a.lambdas.front(), std::make_pair(1.0, 1.0));
  for (const auto& [li, lc] : a.lambdas) {
    EXPECT_GE(li, 0.0);
    EXPECT_LE(li, 4.0);
    EXPECT_GE(lc, 0.0);
    EXPECT_LE(lc, 4.0);
  }
  opt.seed = 43;
  EXPECT_NE(sample_full<double>(full_bundle(), m.nets(true), sched, opt).clip.frames, a.clip.frames);
}

TEST(Sampler, FixedLambdaSkipsUpdates) {
  const TinyModels m;
  SampleOptions opt;
  opt.n_frames = 5;
  opt.fusion.adaptive = false;
  opt.fusion.lambda_init = 2.5;
  const auto r = sample_full<double>(full_bundle(), m.nets(true), NoiseSchedule::cosine(5), opt);
  for (const auto& l : r.lambdas) EXPECT_EQ(l, std::make_pair(2.5, 2.5));
}

TEST(Sampler, SingleBranchWithUnitWeightIsTheAdaptedPrediction) {
  // With lambda = 1, X_uncond + (X_cond - X_uncond) is X_cond, so one step
  // from the same x_T matches a direct adapted pass.
  const TinyModels m;
  const auto sched = NoiseSchedule::cosine(1);
  ConditionBundle b = full_bundle();
  b.object.reset();
  SampleOptions opt;
  opt.n_frames = 4;
  opt.seed = 9;
  const auto r = sample_full<double>(b, m.nets(true), sched, opt);
  Rng rng(9);
  MatD x(4, kFrameDim);
  rng.fill_normal(x, 1.0);
  const PreparedCondition pc = prepare_condition(b, m.nets(true), 4, 20.0);
  const MatD x0 = adapted_forward<double>(x, 0, 1, pc.base, m.mdm, m.speech, *pc.speech_feats);
  MotionClip c;
  c.frames = p_sample_step<double>(x, 0, x0, sched, MatD());
  c.normalized = true;
  c.stats_id = "tiny";
  EXPECT_LT((denormalize(c, m.stats).frames - r.clip.frames).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampler, MissingPrerequisites) {
  const TinyModels m;
  SampleOptions opt;
  opt.n_frames = 4;
  const auto sched = NoiseSchedule::cosine(3);
  try {
    sample_full<double>(full_bundle(), m.nets(false), sched, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPrereq);
  }
  opt.use_interaction = opt.use_cospeech = false;
  EXPECT_NO_THROW(sample_full<double>(full_bundle(), m.nets(false), sched, opt));
  Networks<double> none;
  EXPECT_THROW(sample_full<double>(full_bundle(), none, sched, opt), Error);
}

TEST(Sampler, ZeroLambdaBoundsGiveTheUnconditionalSample) {
  const TinyModels m;
  const auto sched = NoiseSchedule::cosine(5);
  SampleOptions opt;
  opt.n_frames = 5;
  opt.seed = 3;
  opt.fusion.lambda_min = opt.fusion.lambda_max = 0.0;
  const auto fused = sample_full<double>(full_bundle(), m.nets(true), sched, opt);
  SampleOptions plain = opt;
  plain.use_interaction = plain.use_cospeech = false;
  const auto base = sample_full<double>(full_bundle(), m.nets(true), sched, plain);
  EXPECT_LT((fused.clip.frames - base.clip.frames).cwiseAbs().maxCoeff(), 1e-12);
  // No branch at all is plain ancestral sampling with the base model.
  Rng rng(3);
  MatD x(5, kFrameDim);
  rng.fill_normal(x, 1.0);
  const PreparedCondition pc = prepare_condition(full_bundle(), m.nets(false), 5, 20.0);
  for (int t = 4; t >= 0; --t) {
    MatD noise;
    const MatD x0 = mdm_forward<double>(x, t, 5, pc.base, m.mdm);
    if (t > 0) {
      noise.resize(5, kFrameDim);
      rng.fill_normal(noise, 1.0);
    }
    x = p_sample_step<double>(x, t, x0, sched, noise);
  }
  MotionClip c;
  c.frames = x;
  c.normalized = true;
  c.stats_id = "tiny";
  EXPECT_EQ(denormalize(c, m.stats).frames, base.clip.frames);
}

TEST(Anchors, EqualIndependentPassesAndIsolateConditions) {
  const TinyModels m;
  const auto nets = m.nets(true);
  const ConditionBundle b = full_bundle();
  const PreparedCondition pc = prepare_condition(b, nets, 6, 20.0);
  Rng rng(8);
  const MatD x = rand_mat(rng, 6, kFrameDim) * 0.3;
  const Anchors<double> a = fusion_anchors<double>(x, 2, 10, pc, nets);
  EXPECT_EQ(a.x_uncond, mdm_forward<double>(x, 2, 10, pc.base, m.mdm));
  EXPECT_EQ(a.x_int, adapted_forward<double>(x, 2, 10, pc.base, m.mdm, m.inter, interaction_features(x, pc, nets)));
  EXPECT_EQ(a.x_cospeech, adapted_forward<double>(x, 2, 10, pc.base, m.mdm, m.speech, *pc.speech_feats));
  EXPECT_EQ(a.r_int, a.x_int - a.x_uncond);

  // Silencing the speech leaves the interaction anchor untouched.
  ConditionBundle quiet = b;
  std::fill(quiet.speech->samples.begin(), quiet.speech->samples.end(), 0.0);
  quiet.speech->transcript.clear();
  const Anchors<double> q = fusion_anchors<double>(x, 2, 10, prepare_condition(quiet, nets, 6, 20.0), nets);
  EXPECT_EQ(q.x_int, a.x_int);
  EXPECT_NE(q.x_cospeech, a.x_cospeech);

  // Zero gates collapse every anchor onto the base prediction.
  TinyModels z;
  for (auto* br : {&z.inter, &z.speech})
    for (auto& g : br->gates) g.setZero();
  const Anchors<double> za = fusion_anchors<double>(x, 2, 10, pc, z.nets(true));
  EXPECT_EQ(za.x_int, za.x_uncond);
  EXPECT_EQ(za.x_cospeech, za.x_uncond);
  EXPECT_EQ(za.r_int.cwiseAbs().maxCoeff(), 0.0);

  PreparedCondition no_obj = pc;
  no_obj.object.reset();
  EXPECT_THROW(fusion_anchors<double>(x, 2, 10, no_obj, nets), Error);
}

// Reported, not asserted tightly: the two-branch path runs three passes per
// step against one for the bare model.
TEST(Sampler, TimingAcrossBranchCounts) {
  const TinyModels m;
  const auto sched = NoiseSchedule::cosine(10);
  SampleOptions opt;
  opt.n_frames = 24;
  ConditionBundle one = full_bundle();
  one.object.reset();
  auto time_it = [&](const ConditionBundle& b, bool branches) {
    double best = 1e30;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      sample_full<double>(b, m.nets(branches), sched, opt);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double t0 = time_it(ConditionBundle::from_prompt("a person sits down"), false);
  const double t1 = time_it(one, true);
  const double t2 = time_it(full_bundle(), true);
  RecordProperty("no_branch_s", std::to_string(t0));
  RecordProperty("one_branch_s", std::to_string(t1));
  RecordProperty("two_branch_s", std::to_string(t2));
  std::printf("sample_full: none %.4fs  one %.4fs (x%.2f)  two %.4fs (x%.2f)\n", t0, t1, t1 / t0, t2, t2 / t0);
  EXPECT_LT(t2, 8.0 * t0);
}
