#pragma once

// Noise schedule, forward noising, DDPM posterior step, multi-condition
// guidance and adaptive guidance-weight fusion.

#include <algorithm>
#include <span>
#include <vector>

#include "modmo/common.hpp"

namespace modmo {

enum class ScheduleKind { Cosine, Linear };

struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas, alphas, alpha_bars;

  double alpha_bar_prev(int t) const { return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)]; }

  void check_step(int t) const {
    require(t >= 0 && t < T, ErrorCode::StepOutOfRange, "step " + std::to_string(t) + " outside [0, T)");
  }

  static NoiseSchedule from_betas(std::vector<double> betas) {
    require(!betas.empty(), ErrorCode::InvalidArgument, "schedule needs at least one step");
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.betas = std::move(betas);
    double ab = 1.0;
    for (double b : s.betas) {
      require(b > 0.0 && b < 1.0, ErrorCode::InvalidArgument, "betas must lie in (0, 1)");
      s.alphas.push_back(1.0 - b);
      ab *= 1.0 - b;
      s.alpha_bars.push_back(ab);
    }
    return s;
  }

  // alpha_bar(t) = f(t + 1) / f(0), f(u) = cos^2(((u / T) + s) / (1 + s) * pi / 2),
  // betas clipped to 0.999.
  static NoiseSchedule cosine(int T, double s = 0.008) {
    require(T > 0, ErrorCode::InvalidArgument, "T must be positive");
    auto f = [&](double u) {
      const double c = std::cos((u / T + s) / (1.0 + s) * kPi / 2.0);
      return c * c;
    };
    std::vector<double> betas;
    for (int t = 0; t < T; ++t) betas.push_back(std::min(1.0 - f(t + 1.0) / f(t), 0.999));
    return from_betas(std::move(betas));
  }

  // Linear betas scaled so that T = 1000 gives [1e-4, 0.02].
  static NoiseSchedule linear(int T) {
    require(T > 0, ErrorCode::InvalidArgument, "T must be positive");
    const double scale = 1000.0 / T;
    const double b0 = std::min(scale * 1e-4, 0.5), b1 = std::min(scale * 0.02, 0.999);
    std::vector<double> betas;
    for (int t = 0; t < T; ++t) betas.push_back(T == 1 ? b0 : b0 + (b1 - b0) * t / (T - 1));
    return from_betas(std::move(betas));
  }

  static NoiseSchedule make(ScheduleKind kind, int T) { return kind == ScheduleKind::Cosine ? cosine(T) : linear(T); }

  struct Posterior {
    double coef_x0, coef_xt, variance;
  };

  // q(x_{t-1} | x_t, x0) = N(coef_x0 * x0 + coef_xt * x_t, variance)
  Posterior posterior(int t) const {
    check_step(t);
    const double ab = alpha_bars[static_cast<std::size_t>(t)];
    const double abp = alpha_bar_prev(t);
    const double beta = betas[static_cast<std::size_t>(t)];
    return {beta * std::sqrt(abp) / (1.0 - ab), (1.0 - abp) * std::sqrt(alphas[static_cast<std::size_t>(t)]) / (1.0 - ab),
            beta * (1.0 - abp) / (1.0 - ab)};
  }
};

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
template <class T>
Mat<T> q_sample(const Mat<T>& x0, int t, const Mat<T>& eps, const NoiseSchedule& s) {
  s.check_step(t);
  require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), ErrorCode::ShapeMismatch, "x0/eps shape mismatch");
  const double ab = s.alpha_bars[static_cast<std::size_t>(t)];
  return static_cast<T>(std::sqrt(ab)) * x0 + static_cast<T>(std::sqrt(1.0 - ab)) * eps;
}

// One ancestral DDPM step from an x0 prediction; t = 0 returns the mean.
template <class T>
Mat<T> p_sample_step(const Mat<T>& x_t, int t, const Mat<T>& x0_pred, const NoiseSchedule& s, const Mat<T>& noise) {
  require(x_t.rows() == x0_pred.rows() && x_t.cols() == x0_pred.cols(), ErrorCode::ShapeMismatch,
          "x_t/x0 shape mismatch");
  const auto post = s.posterior(t);
  Mat<T> mean = static_cast<T>(post.coef_x0) * x0_pred + static_cast<T>(post.coef_xt) * x_t;
  if (t == 0) return mean;
  require(noise.rows() == x_t.rows() && noise.cols() == x_t.cols(), ErrorCode::ShapeMismatch, "noise shape mismatch");
  return mean + static_cast<T>(std::sqrt(post.variance)) * noise;
}

enum class MotionTag { None, EndsSitting, StartsSitting };

inline std::string_view to_string(MotionTag t) {
  switch (t) {
    case MotionTag::EndsSitting: return "ends_sitting";
    case MotionTag::StartsSitting: return "starts_sitting";
    default: return "none";
  }
}

inline MotionTag parse_motion_tag(std::string_view s) {
  if (s == "ends_sitting") return MotionTag::EndsSitting;
  if (s == "starts_sitting") return MotionTag::StartsSitting;
  require(s == "none", ErrorCode::Format, "unknown motion tag '" + std::string(s) + "'");
  return MotionTag::None;
}

// Frames that receive contact/collision supervision.
inline std::vector<int> select_supervision_frames(MotionTag tag, int N, int K) {
  require(K > 0 && K <= N, ErrorCode::BadWindow, "need 0 < K <= N");
  std::vector<int> f;
  if (tag == MotionTag::EndsSitting)
    for (int k = N - K; k < N; ++k) f.push_back(k);
  else if (tag == MotionTag::StartsSitting)
    for (int k = 0; k < K; ++k) f.push_back(k);
  return f;
}

// X = X_uncond + sum_i lambda_i * residual_i
template <class T>
Mat<T> guided_prediction(const Mat<T>& x_uncond, std::span<const Mat<T>> residuals, std::span<const double> lambdas) {
  require(residuals.size() == lambdas.size(), ErrorCode::ShapeMismatch, "one lambda per residual");
  Mat<T> out = x_uncond;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    require(residuals[i].rows() == x_uncond.rows() && residuals[i].cols() == x_uncond.cols(), ErrorCode::ShapeMismatch,
            "residual shape mismatch");
    out += static_cast<T>(lambdas[i]) * residuals[i];
  }
  return out;
}

// Rescales the co-speech residual to the Frobenius norm of the interaction
// residual. A zero interaction residual leaves it unscaled.
template <class T>
Mat<T> normalize_cospeech_residual(const Mat<T>& r_cospeech, const Mat<T>& r_int, double eps = 1e-12) {
  require(r_cospeech.rows() == r_int.rows() && r_cospeech.cols() == r_int.cols(), ErrorCode::ShapeMismatch,
          "residual shape mismatch");
  const double n_int = static_cast<double>(r_int.norm());
  if (n_int == 0.0) return r_cospeech;
  const double n_cs = std::max(static_cast<double>(r_cospeech.norm()), eps);
  return static_cast<T>(n_int / n_cs) * r_cospeech;
}

struct FusionConfig {
  double lambda_init = 1.0;
  double eta = 0.05;
  double lambda_min = 0.0;
  double lambda_max = 4.0;
  bool adaptive = true;
};

struct FusionState {
  double lambda_int = 1.0;
  double lambda_cospeech = 1.0;
  double eta = 0.05;
  double lambda_min = 0.0;
  double lambda_max = 4.0;

  static FusionState from_config(const FusionConfig& c) {
    FusionState s;
    s.eta = c.eta;
    s.lambda_min = c.lambda_min;
    s.lambda_max = c.lambda_max;
    s.lambda_int = s.lambda_cospeech = std::clamp(c.lambda_init, c.lambda_min, c.lambda_max);
    return s;
  }

  double clamp(double l) const { return std::clamp(l, lambda_min, lambda_max); }
};

// Anchor-consistency loss, averaged over entries: |X - anchor|^2 / numel.
template <class T>
double fusion_loss(const Mat<T>& fused, const Mat<T>& anchor) {
  require(fused.rows() == anchor.rows() && fused.cols() == anchor.cols(), ErrorCode::ShapeMismatch,
          "fusion shape mismatch");
  return static_cast<double>((fused - anchor).template cast<double>().squaredNorm()) / static_cast<double>(fused.size());
}

// d fusion_loss(X, anchor) / d lambda where X depends on lambda through
// lambda * residual: 2 <X - anchor, residual> / numel.
template <class T>
double fusion_gradient(const Mat<T>& fused, const Mat<T>& anchor, const Mat<T>& residual) {
  require(fused.rows() == residual.rows() && fused.cols() == residual.cols() && anchor.rows() == fused.rows() &&
              anchor.cols() == fused.cols(),
          ErrorCode::ShapeMismatch, "fusion shape mismatch");
  const double dot = ((fused - anchor).template cast<double>().array() * residual.template cast<double>().array()).sum();
  return 2.0 * dot / static_cast<double>(fused.size());
}

// Largest eta for which one gradient step on lambda_i cannot increase its
// loss: the loss is quadratic in lambda_i with curvature 2 |r_i|^2 / numel.
template <class T>
double fusion_stability_bound(const Mat<T>& residual) {
  const double sq = static_cast<double>(residual.template cast<double>().squaredNorm());
  return sq == 0.0 ? std::numeric_limits<double>::infinity() : static_cast<double>(residual.size()) / (2.0 * sq);
}

struct FusionGradients {
  double d_int = 0.0, d_cospeech = 0.0;
};

// lambda_i <- clamp(lambda_i - eta * dL_i/dlambda_i)
template <class T>
FusionState adaptive_fusion_update(const Mat<T>& fused, const Mat<T>& anchor_int, const Mat<T>& anchor_cospeech,
                                   const Mat<T>& r_int, const Mat<T>& r_cospeech, const FusionState& state,
                                   FusionGradients* grads_out = nullptr) {
  FusionGradients g;
  g.d_int = fusion_gradient(fused, anchor_int, r_int);
  g.d_cospeech = fusion_gradient(fused, anchor_cospeech, r_cospeech);
  FusionState next = state;
  next.lambda_int = state.clamp(state.lambda_int - state.eta * g.d_int);
  next.lambda_cospeech = state.clamp(state.lambda_cospeech - state.eta * g.d_cospeech);
  if (grads_out) *grads_out = g;
  return next;
}

}  // namespace modmo
