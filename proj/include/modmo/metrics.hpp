#pragma once

// Gesture statistics, Frechet distance between Gaussian fits, beat
// consistency, diversity and goal-reaching errors.

#include <algorithm>
#include <set>
#include <vector>

#include <Eigen/Eigenvalues>

#include "modmo/audio.hpp"
#include "modmo/encoders.hpp"
#include "modmo/geometry.hpp"
#include "modmo/pose.hpp"

namespace modmo {

// Spine chain, neck, head, collars, shoulders, elbows, wrists.
inline const std::vector<int>& upper_body_joints() {
  static const std::vector<int> j = {kSpine1,       kSpine2,        kSpine3,    kNeck,      kLeftCollar,
                                     kRightCollar,  kHead,          kLeftShoulder, kRightShoulder, kLeftElbow,
                                     kRightElbow,   kLeftWrist,     kRightWrist};
  return j;
}

struct MetricConfig {
  int window = 20;  // frames
  int stride = 10;
  double bc_sigma = 0.1;          // s
  double onset_ratio = 1.5;       // x median flux
  double speed_min_ratio = 0.3;   // x median speed
  int diversity_pairs = 100;
  std::uint64_t diversity_seed = 0;
};

// Root-relative joint speeds (m/s), central differences inside the clip and
// one-sided at the ends. Rows are frames.
inline MatD joint_speeds(const MotionClip& clip, const Skeleton& sk = default_skeleton()) {
  require(!clip.normalized, ErrorCode::NormalizedInput, "speeds need a denormalized clip");
  const Eigen::Index n = clip.frames.rows();
  MatD v = MatD::Zero(n, kNumJoints);
  if (n < 2) return v;
  std::vector<JointPositions> rel;
  for (const auto& fk : clip_kinematics(clip, sk)) {
    JointPositions p = fk.pos;
    for (auto& x : p) x -= fk.pos[0];
    rel.push_back(p);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto a = static_cast<std::size_t>(std::max<Eigen::Index>(k - 1, 0));
    const auto b = static_cast<std::size_t>(std::min<Eigen::Index>(k + 1, n - 1));
    const double dt = static_cast<double>(b - a) / clip.fps;
    for (int j = 0; j < kNumJoints; ++j) v(k, j) = (rel[b][static_cast<std::size_t>(j)] - rel[a][static_cast<std::size_t>(j)]).norm() / dt;
  }
  return v;
}

// One row per window: [mean, std] of the upper-body 6D channels followed by
// [mean, std] of the upper-body joint speeds. Population std.
inline MatD gesture_features(const MotionClip& clip, int W, int S, const Skeleton& sk = default_skeleton()) {
  require(W > 0 && S > 0, ErrorCode::InvalidArgument, "window and stride must be positive");
  const Eigen::Index n = clip.frames.rows();
  require(n >= W, ErrorCode::ClipTooShort, "clip shorter than the feature window");
  const auto& ub = upper_body_joints();
  const auto nj = static_cast<Eigen::Index>(ub.size());
  MatD chan(n, 6 * nj + nj);
  const MatD speeds = joint_speeds(clip, sk);
  for (Eigen::Index i = 0; i < nj; ++i) {
    chan.middleCols(6 * i, 6) = clip.frames.middleCols(6 * ub[static_cast<std::size_t>(i)], 6);
    chan.col(6 * nj + i) = speeds.col(ub[static_cast<std::size_t>(i)]);
  }
  const Eigen::Index d = chan.cols();
  const Eigen::Index n_win = (n - W) / S + 1;
  MatD out(n_win, 2 * d);
  for (Eigen::Index w = 0; w < n_win; ++w) {
    const auto blk = chan.middleRows(w * S, W);
    const RowVec<double> mean = blk.colwise().mean();
    const RowVec<double> var = (blk.rowwise() - mean).array().square().colwise().mean();
    out.row(w) << mean, var.cwiseSqrt();
  }
  return out;
}

struct GaussianFit {
  VecD mean;
  MatD cov;
};

inline constexpr double kCovRegularization = 1e-6;

// Unbiased covariance plus a small diagonal term.
inline GaussianFit fit_gaussian(const MatD& feats) {
  require(feats.rows() >= 2, ErrorCode::TooFewSamples, "need at least two feature vectors");
  GaussianFit g;
  g.mean = feats.colwise().mean().transpose();
  const MatD c = feats.rowwise() - g.mean.transpose();
  g.cov = c.transpose() * c / static_cast<double>(feats.rows() - 1);
  g.cov.diagonal().array() += kCovRegularization;
  return g;
}

namespace detail {

inline Eigen::SelfAdjointEigenSolver<MatD> checked_eigen(const MatD& m, const char* what) {
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff()),
          ErrorCode::NotPSD, std::string(what) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatD> es(m);
  require(es.info() == Eigen::Success, ErrorCode::NotPSD, std::string(what) + ": eigen-decomposition failed");
  require(es.eigenvalues().minCoeff() >= -1e-9, ErrorCode::NotPSD, std::string(what) + " has a negative eigenvalue");
  return es;
}

inline MatD psd_sqrt(const Eigen::SelfAdjointEigenSolver<MatD>& es) {
  const VecD s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2)
inline double frechet_gesture_distance(const GaussianFit& a, const GaussianFit& b) {
  require(a.mean.size() == b.mean.size() && a.cov.rows() == a.mean.size() && b.cov.rows() == b.mean.size() &&
              a.cov.cols() == a.cov.rows() && b.cov.cols() == b.cov.rows(),
          ErrorCode::DimensionMismatch, "Gaussian fits differ in dimension");
  const MatD sa = detail::psd_sqrt(detail::checked_eigen(a.cov, "first covariance"));
  detail::checked_eigen(b.cov, "second covariance");
  MatD m = sa * b.cov * sa;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatD> es(m);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

// Times (s) of local minima of the mean upper-body speed that fall below
// ratio * median speed. The first and last frames never count.
inline std::vector<double> kinematic_beats(const MotionClip& clip, double speed_ratio = 0.3,
                                           const Skeleton& sk = default_skeleton()) {
  const MatD v = joint_speeds(clip, sk);
  const Eigen::Index n = v.rows();
  VecD m = VecD::Zero(n);
  for (int j : upper_body_joints()) m += v.col(j);
  m /= static_cast<double>(upper_body_joints().size());
  std::vector<double> sorted(m.data(), m.data() + n);
  std::vector<double> beats;
  if (n < 3) return beats;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double thr = speed_ratio * sorted[static_cast<std::size_t>(n / 2)];
  for (Eigen::Index k = 1; k + 1 < n; ++k)
    if (m(k) < m(k - 1) && m(k) <= m(k + 1) && m(k) < thr) beats.push_back(static_cast<double>(k) / clip.fps);
  return beats;
}

// Times (s) of local maxima of the band-energy flux above ratio * median.
inline std::vector<double> audio_beats(const SpeechInput& speech, double fps, double onset_ratio = 1.5,
                                       Eigen::Index n_frames = -1) {
  const VecD f = onset_strength(audio_features(speech, fps, {}, n_frames));
  const Eigen::Index n = f.size();
  std::vector<double> beats;
  if (n < 3) return beats;
  std::vector<double> sorted(f.data(), f.data() + n);
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double thr = onset_ratio * sorted[static_cast<std::size_t>(n / 2)];
  for (Eigen::Index k = 1; k + 1 < n; ++k)
    if (f(k) > f(k - 1) && f(k) >= f(k + 1) && f(k) > thr) beats.push_back(static_cast<double>(k) / fps);
  return beats;
}

// Mean over kinematic beats of exp(-d^2 / 2 sigma^2), d = distance to the
// nearest audio beat. No kinematic beats gives 0.
inline double beat_consistency_from_times(std::span<const double> kinematic, std::span<const double> audio,
                                          double sigma) {
  require(sigma > 0, ErrorCode::InvalidArgument, "sigma must be positive");
  if (kinematic.empty() || audio.empty()) return 0.0;
  double s = 0.0;
  for (double b : kinematic) {
    double best = std::numeric_limits<double>::infinity();
    for (double a : audio) best = std::min(best, (b - a) * (b - a));
    s += std::exp(-best / (2.0 * sigma * sigma));
  }
  return s / static_cast<double>(kinematic.size());
}

inline double beat_consistency(const MotionClip& clip, const SpeechInput& speech, const MetricConfig& cfg = {}) {
  require(!speech.samples.empty(), ErrorCode::EmptyAudio, "speech has no samples");
  const auto kin = kinematic_beats(clip, cfg.speed_min_ratio);
  const auto aud = audio_beats(speech, clip.fps, cfg.onset_ratio, clip.frames.rows());
  return beat_consistency_from_times(kin, aud, cfg.bc_sigma);
}

// Mean Euclidean distance over seeded distinct pairs of rows. Rows are sorted
// first so the result does not depend on input order. With n_pairs at least
// the number of pairs, every pair is used.
inline double diversity(const MatD& feats, int n_pairs, std::uint64_t seed) {
  const Eigen::Index n = feats.rows();
  require(n >= 2, ErrorCode::TooFewSamples, "diversity needs at least two feature vectors");
  require(n_pairs > 0, ErrorCode::InvalidArgument, "n_pairs must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < feats.cols(); ++c)
      if (feats(a, c) != feats(b, c)) return feats(a, c) < feats(b, c);
    return false;
  });
  MatD x(n, feats.cols());
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = feats.row(order[static_cast<std::size_t>(i)]);

  const std::uint64_t total = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
  auto dist = [&](std::uint64_t i, std::uint64_t j) {
    return (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
  };
  double s = 0.0;
  if (static_cast<std::uint64_t>(n_pairs) >= total) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += dist(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    return s / static_cast<double>(total);
  }
  Rng rng(seed);
  std::set<std::pair<std::uint64_t, std::uint64_t>> used;
  while (used.size() < static_cast<std::size_t>(n_pairs)) {
    std::uint64_t i = rng.below(static_cast<std::uint64_t>(n)), j = rng.below(static_cast<std::uint64_t>(n));
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (used.insert({i, j}).second) s += dist(i, j);
  }
  return s / n_pairs;
}

struct GoalError {
  double pos = 0, height = 0, orient = 0;
};

// Final-frame root against the goal: planar distance, height difference and
// wrapped heading difference in [0, pi].
inline GoalError goal_reach_error(const MotionClip& clip, const Skeleton& sk, const GoalSpec& goal) {
  require(clip.frames.rows() > 0, ErrorCode::EmptyClip, "clip has no frames");
  const Vec3 root_start = default_root_start(sk);
  const Vec3 root = integrate_root(clip, root_start).back();
  const auto last = clip.frames.row(clip.frames.rows() - 1);
  const Mat3 R = rot6d_to_matrix_smooth(Vec3(last(0), last(1), last(2)), Vec3(last(3), last(4), last(5)));
  GoalError e;
  e.pos = std::hypot(root.x() - goal.position.x(), root.y() - goal.position.y());
  e.height = std::abs(root.z() - goal.height);
  e.orient = std::abs(wrap_angle(root_heading(R) - goal.heading));
  return e;
}

}  // namespace modmo
