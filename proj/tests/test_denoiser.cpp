#include <gtest/gtest.h>

#include "modmo/denoiser.hpp"
#include "modmo/optim.hpp"
#include "oracle_denoiser.hpp"
#include "test_util.hpp"

using namespace modmo;
using namespace modmo::oracle;

TEST(TimeEmbed, ClosedForm) {
  const VecD e0 = time_embed(0, 50, 8);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(e0(i), i % 2 == 0 ? 0.0 : 1.0);
  const VecD e7 = time_embed(7, 50, 8);
  for (int i = 0; i < 8; ++i) {
    const double w = std::pow(10000.0, -2.0 * (i / 2) / 8.0);
    EXPECT_NEAR(e7(i), i % 2 == 0 ? std::sin(7 * w) : std::cos(7 * w), 1e-12);
  }
  EXPECT_NE(time_embed(3, 50, 8), time_embed(4, 50, 8));
  EXPECT_THROW(time_embed(50, 50, 8), Error);
  EXPECT_THROW(time_embed(-1, 50, 8), Error);
}

TEST(Mdm, MatchesOracle) {
  Fixture f(4, 1, 2, 6, 1);
  // single-head d_model=4 and a two-head variant
  EXPECT_LT((mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm) - o_mdm(f.x, f.t, f.cond, f.mdm)).cwiseAbs().maxCoeff(),
            1e-9);
  Fixture g(8, 2, 5, 7, 2);
  EXPECT_LT((mdm_forward<double>(g.x, g.t, 10, g.cond, g.mdm) - o_mdm(g.x, g.t, g.cond, g.mdm)).cwiseAbs().maxCoeff(),
            1e-9);
}

TEST(Mdm, ZeroWeightsGiveOutputBias) {
  DenoiserConfig c;
  MdmParams<double> p(c);
  Rng rng(3);
  for (Eigen::Index i = 0; i < kFrameDim; ++i) p.out_proj.b(0, i) = rng.normal();
  CondInput cond;
  cond.prompt = prompt_embed("a person walks");
  const MatD y = mdm_forward<double>(random_mat(rng, 8, kFrameDim), 5, 50, cond, p);
  for (Eigen::Index r = 0; r < y.rows(); ++r) EXPECT_EQ(y.row(r), p.out_proj.b.row(0));
}

TEST(Mdm, OutputShapeFollowsInput) {
  DenoiserConfig c;
  MdmParams<float> p(c);
  p.init(4);
  CondInput cond;
  cond.prompt = prompt_embed("a person walks");
  for (int n : {8, 64, 196}) {
    const Mat<float> y = mdm_forward<float>(Mat<float>::Zero(n, kFrameDim), 0, 50, cond, p);
    EXPECT_EQ(y.rows(), n);
    EXPECT_EQ(y.cols(), kFrameDim);
  }
  EXPECT_THROW(mdm_forward<float>(Mat<float>::Zero(4, 10), 0, 50, cond, p), Error);
  EXPECT_EQ(p.blocks.size(), 8u);
}

TEST(Mdm, FrameOrderMatters) {
  Fixture f(8, 2, 4, 6, 5);
  MatD shuffled = f.x;
  shuffled.row(0).swap(shuffled.row(3));
  MatD y = mdm_forward<double>(shuffled, f.t, 10, f.cond, f.mdm);
  y.row(0).swap(y.row(3));
  EXPECT_GT((y - mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Adapted, MatchesHandUnrolledAlgorithm) {
  Fixture f(4, 1, 2, 6, 6);
  const MatD y = adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats);
  EXPECT_LT((y - o_adapted(f.x, f.t, f.cond, f.mdm, f.br, f.feats)).cwiseAbs().maxCoeff(), 1e-9);
  // All-ones gates are the ungated recurrence.
  for (auto& g : f.br.gates) g.setOnes();
  const MatD y1 = adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats);
  EXPECT_LT((y1 - o_adapted(f.x, f.t, f.cond, f.mdm, f.br, f.feats)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_GT((y1 - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Adapted, ZeroGatesReduceToBaseExactly) {
  Fixture f(8, 2, 5, 7, 7);
  for (auto& g : f.br.gates) g.setZero();
  const MatD base = mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm);
  EXPECT_EQ(adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats), base);
  EXPECT_EQ(adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, MatD::Zero(5, 5)), base);
}

TEST(Adapted, ConditionShapeErrors) {
  Fixture f(4, 1, 3, 6, 8);
  EXPECT_THROW(adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, MatD::Zero(2, 5)), Error);
  EXPECT_THROW(adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, MatD::Zero(3, 4)), Error);
}

TEST(Backward, MdmGradientsMatchFiniteDifferences) {
  Fixture f(8, 2, 4, 6, 9);
  ForwardTrace<double> tr;
  mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm, &tr);
  const auto g = backward<double>(f.w, &tr, f.mdm, nullptr, true);
  ASSERT_TRUE(g.mdm.has_value());
  ASSERT_FALSE(g.branch.has_value());
  auto ps = f.mdm.params();
  auto gs = const_cast<MdmParams<double>&>(*g.mdm).params();
  auto loss = [&] { return (mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm).array() * f.w.array()).sum(); };
  const double h = 1e-4;
  double worst = 0;
  for (std::size_t p = 0; p < ps.size(); ++p)
    for (Eigen::Index i = 0; i < ps[p].value->size(); ++i) {
      double& v = ps[p].value->data()[i];
      const double orig = v;
      v = orig + h;
      const double lp = loss();
      v = orig - h;
      const double lm = loss();
      v = orig;
      const double e = rel_err(gs[p].value->data()[i], (lp - lm) / (2 * h));
      worst = std::max(worst, e);
      ASSERT_LE(e, 1e-4) << ps[p].name << "[" << i << "] " << gs[p].value->data()[i] << " vs " << (lp - lm) / (2 * h);
    }
  RecordProperty("worst_rel_err", std::to_string(worst));
}

TEST(Backward, BranchGradientsMatchFiniteDifferences) {
  Fixture f(8, 2, 4, 6, 10);
  for (auto& g : f.br.gates) g.array() += 0.5;
  ForwardTrace<double> tr;
  adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats, &tr);
  const auto g = backward<double>(f.w, &tr, f.mdm, &f.br, false);
  EXPECT_FALSE(g.mdm.has_value());  // frozen base
  ASSERT_TRUE(g.branch.has_value());
  auto ps = f.br.params();
  auto gs = const_cast<BranchParams<double>&>(*g.branch).params();
  auto loss = [&] {
    return (adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats).array() * f.w.array()).sum();
  };
  const double h = 1e-4;
  for (std::size_t p = 0; p < ps.size(); ++p)
    for (Eigen::Index i = 0; i < ps[p].value->size(); ++i) {
      double& v = ps[p].value->data()[i];
      const double orig = v;
      v = orig + h;
      const double lp = loss();
      v = orig - h;
      const double lm = loss();
      v = orig;
      ASSERT_LE(rel_err(gs[p].value->data()[i], (lp - lm) / (2 * h)), 1e-4) << ps[p].name << "[" << i << "] " << gs[p].value->data()[i] << " vs " << (lp - lm) / (2 * h);
    }
}

TEST(Backward, ConstantLossAndMissingTrace) {
  Fixture f(4, 1, 3, 6, 11);
  ForwardTrace<double> tr;
  mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm, &tr);
  auto g = backward<double>(MatD::Zero(3, 6), &tr, f.mdm, nullptr, true);
  g.mdm->for_each([](const std::string&, Mat<double>& a) { EXPECT_EQ(a.cwiseAbs().maxCoeff(), 0.0); });
  try {
    backward<double>(MatD::Zero(3, 6), nullptr, f.mdm, nullptr, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoTrace);
  }
  ForwardTrace<double> empty;
  EXPECT_THROW(backward<double>(MatD::Zero(3, 6), &empty, f.mdm, nullptr, true), Error);
}

TEST(AdamW, HandRecurrence) {
  Mat<double> p(1, 1), g(1, 1);
  p << 0.0;
  g << 1.0;
  std::vector<nn::ParamRef<double>> ps = {{"p", &p}}, gs = {{"p", &g}};
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  adamw_step(ps, gs, st, cfg);
  // m_hat = 1, v_hat = 1: shift = -0.1 / (1 + 1e-8)
  EXPECT_NEAR(p(0, 0), -0.1 / (1.0 + 1e-8), 1e-15);

  Mat<double> q = Mat<double>::Constant(2, 2, 3.0), z = Mat<double>::Zero(2, 2);
  std::vector<nn::ParamRef<double>> qs = {{"q", &q}}, zs = {{"q", &z}};
  AdamWState<double> s2;
  adamw_step(qs, zs, s2, AdamWConfig{});
  EXPECT_EQ(q, Mat<double>::Constant(2, 2, 3.0));
  AdamWConfig wd;
  wd.lr = 0.01;
  wd.weight_decay = 0.5;
  AdamWState<double> s3;
  adamw_step(qs, zs, s3, wd);
  EXPECT_NEAR(q(0, 0), 3.0 * (1 - 0.005), 1e-15);

  Mat<double> bad(3, 1);
  std::vector<nn::ParamRef<double>> bs = {{"b", &bad}};
  EXPECT_THROW(adamw_step(qs, bs, s2, AdamWConfig{}), Error);
}

TEST(Params, CastRoundTripKeepsValues) {
  Fixture f(8, 2, 3, 6, 12);
  const auto mf = f.mdm.cast<float>();
  const auto md = mf.cast<double>();
  auto a = f.mdm.params();
  auto b = const_cast<MdmParams<double>&>(md).params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((*a[i].value - *b[i].value).cwiseAbs().maxCoeff(), 1e-6);
  const auto bf = f.br.cast<float>();
  EXPECT_EQ(bf.gates.size(), 8u);
  EXPECT_EQ(bf.encoder.layers.size(), 2u);
}
