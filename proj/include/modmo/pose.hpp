#pragma once

// Pose representation: per-joint 6D rotations (first two columns of the
// parent-relative rotation matrix) followed by the root displacement since the
// previous frame. World frame is Z-up, meters; the body faces +x at rest.
//
// Frame layout (135 scalars):
//   [6*j .. 6*j+2]   column 0 of joint j's local rotation
//   [6*j+3 .. 6*j+5] column 1 of joint j's local rotation
//   [132 .. 134]     root delta translation

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modmo/common.hpp"

namespace modmo {

inline constexpr int kNumJoints = 22;
inline constexpr int kRotDims = 6;
inline constexpr int kTransOffset = kNumJoints * kRotDims;  // 132
inline constexpr int kFrameDim = kTransOffset + 3;          // 135
inline constexpr double kGramSchmidtEps = 1e-8;

enum Joint : int {
  kPelvis = 0,
  kLeftHip,
  kRightHip,
  kSpine1,
  kLeftKnee,
  kRightKnee,
  kSpine2,
  kLeftAnkle,
  kRightAnkle,
  kSpine3,
  kLeftFoot,
  kRightFoot,
  kNeck,
  kLeftCollar,
  kRightCollar,
  kHead,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "pelvis",      "left_hip",       "right_hip",      "spine1",     "left_knee",   "right_knee",
    "spine2",      "left_ankle",     "right_ankle",    "spine3",     "left_foot",   "right_foot",
    "neck",        "left_collar",    "right_collar",   "head",       "left_shoulder", "right_shoulder",
    "left_elbow",  "right_elbow",    "left_wrist",     "right_wrist"};

struct Rot6D {
  Vec3 a = Vec3::UnitX();
  Vec3 b = Vec3::UnitY();
};

using FrameVec = Eigen::Matrix<double, kFrameDim, 1>;

// Gram-Schmidt on (a, b). Throws DegenerateRotation when |a| <= eps or b is
// (anti)parallel to a within eps.
inline Mat3 rot6d_to_matrix(const Rot6D& r, double eps = kGramSchmidtEps) {
  const double na = r.a.norm();
  require(na > eps, ErrorCode::DegenerateRotation, "first 6D column has near-zero norm");
  const Vec3 c1 = r.a / na;
  const Vec3 u = r.b - c1.dot(r.b) * c1;
  const double nu = u.norm();
  require(nu > eps, ErrorCode::DegenerateRotation, "6D columns are parallel");
  const Vec3 c2 = u / nu;
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return m;
}

inline Rot6D matrix_to_rot6d(const Mat3& R) {
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  require(orth <= 1e-6 && std::abs(R.determinant() - 1.0) <= 1e-6, ErrorCode::NotARotation,
          "matrix is not a proper rotation");
  return Rot6D{R.col(0), R.col(1)};
}

// Smoothed Gram-Schmidt used on network outputs and noisy samples: norms are
// computed as sqrt(|v|^2 + eps^2), so it never throws and is differentiable.
inline Mat3 rot6d_to_matrix_smooth(const Vec3& a, const Vec3& b, double eps = 1e-6) {
  const Vec3 c1 = a / std::sqrt(a.squaredNorm() + eps * eps);
  const Vec3 u = b - c1.dot(b) * c1;
  const Vec3 c2 = u / std::sqrt(u.squaredNorm() + eps * eps);
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return m;
}

// Reverse-mode derivative of rot6d_to_matrix_smooth.
inline void rot6d_smooth_backward(const Vec3& a, const Vec3& b, const Mat3& dR, Vec3& da, Vec3& db,
                                  double eps = 1e-6) {
  const double n1 = std::sqrt(a.squaredNorm() + eps * eps);
  const Vec3 c1 = a / n1;
  const double s = c1.dot(b);
  const Vec3 u = b - s * c1;
  const double n2 = std::sqrt(u.squaredNorm() + eps * eps);
  const Vec3 c2 = u / n2;

  Vec3 dc1 = dR.col(0);
  Vec3 dc2 = dR.col(1);
  const Vec3 dc3 = dR.col(2);
  dc1 += c2.cross(dc3);
  dc2 += dc3.cross(c1);

  const Vec3 du = (dc2 - c2 * c2.dot(dc2)) / n2;
  db = du;
  const double ds = -du.dot(c1);
  dc1 += -s * du + ds * b;
  db += ds * c1;
  da = (dc1 - c1 * c1.dot(dc1)) / n1;
}

inline Mat3 rot_x(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

struct PoseFrame {
  std::array<Rot6D, kNumJoints> joint_rots;
  Vec3 delta_trans = Vec3::Zero();
};

inline FrameVec encode_frame(std::span<const Mat3, kNumJoints> rots, const Vec3& delta) {
  FrameVec v;
  for (int j = 0; j < kNumJoints; ++j) {
    v.segment<3>(6 * j) = rots[j].col(0);
    v.segment<3>(6 * j + 3) = rots[j].col(1);
  }
  v.segment<3>(kTransOffset) = delta;
  return v;
}

inline FrameVec encode_frame(const PoseFrame& f) {
  FrameVec v;
  for (int j = 0; j < kNumJoints; ++j) {
    v.segment<3>(6 * j) = f.joint_rots[j].a;
    v.segment<3>(6 * j + 3) = f.joint_rots[j].b;
  }
  v.segment<3>(kTransOffset) = f.delta_trans;
  return v;
}

template <class Row>
PoseFrame decode_frame(const Row& v) {
  require(v.size() == kFrameDim, ErrorCode::ShapeMismatch, "frame must have 135 entries");
  PoseFrame f;
  for (int j = 0; j < kNumJoints; ++j) {
    f.joint_rots[j].a = Vec3(v(6 * j), v(6 * j + 1), v(6 * j + 2));
    f.joint_rots[j].b = Vec3(v(6 * j + 3), v(6 * j + 4), v(6 * j + 5));
  }
  f.delta_trans = Vec3(v(kTransOffset), v(kTransOffset + 1), v(kTransOffset + 2));
  return f;
}

struct MotionClip {
  MatD frames;  // N x 135, row per frame
  double fps = 20.0;
  bool normalized = false;
  std::string stats_id;

  Eigen::Index num_frames() const { return frames.rows(); }
  double duration() const { return static_cast<double>(frames.rows()) / fps; }

  void validate() const {
    require(fps > 0.0, ErrorCode::InvalidArgument, "fps must be positive");
    require(frames.cols() == kFrameDim, ErrorCode::ShapeMismatch, "clip frames must be 135-dimensional");
    require(!normalized || !stats_id.empty(), ErrorCode::InvalidArgument,
            "normalized clip must reference its stats");
  }
};

struct Skeleton {
  std::array<int, kNumJoints> parent;
  std::array<Vec3, kNumJoints> rest_offsets;

  void validate() const {
    require(parent[0] == -1, ErrorCode::InvalidArgument, "joint 0 must be the root");
    for (int j = 1; j < kNumJoints; ++j)
      require(parent[j] >= 0 && parent[j] < j, ErrorCode::InvalidArgument, "parent[j] must precede j");
  }
};

// SMPL 22-joint tree with synthetic offsets (body height about 1.7 m).
inline const Skeleton& default_skeleton() {
  static const Skeleton s = [] {
    Skeleton k;
    k.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    k.rest_offsets = {
        Vec3(0, 0, 0),          Vec3(0, 0.09, -0.06),   Vec3(0, -0.09, -0.06), Vec3(0, 0, 0.11),
        Vec3(0, 0, -0.40),      Vec3(0, 0, -0.40),      Vec3(0, 0, 0.13),      Vec3(0, 0, -0.40),
        Vec3(0, 0, -0.40),      Vec3(0, 0, 0.06),       Vec3(0.12, 0, -0.05),  Vec3(0.12, 0, -0.05),
        Vec3(0, 0, 0.20),       Vec3(0, 0.07, 0.14),    Vec3(0, -0.07, 0.14),  Vec3(0, 0, 0.10),
        Vec3(0, 0.11, 0.02),    Vec3(0, -0.11, 0.02),   Vec3(0, 0.26, 0),      Vec3(0, -0.26, 0),
        Vec3(0, 0.25, 0),       Vec3(0, -0.25, 0),
    };
    return k;
  }();
  return s;
}

// Pelvis height above the floor in the rest pose (feet on the ground).
inline double standing_pelvis_height(const Skeleton& sk = default_skeleton()) {
  double z = 0.0;
  for (int j = kLeftFoot; j != -1 && j != 0; j = sk.parent[j]) z += sk.rest_offsets[j].z();
  return -z;
}

struct NormStats {
  VecD mean = VecD::Zero(kFrameDim);
  VecD std = VecD::Ones(kFrameDim);
  std::string id;

  static constexpr double kStdFloor = 1e-6;

  void validate() const {
    require(mean.size() == kFrameDim && std.size() == kFrameDim, ErrorCode::StatsMismatch,
            "stats must be 135-dimensional");
    require((std.array() > 0.0).all(), ErrorCode::StatsMismatch, "std components must be positive");
  }
};

inline NormStats compute_stats(std::span<const MotionClip> clips, std::string id) {
  VecD sum = VecD::Zero(kFrameDim), sq = VecD::Zero(kFrameDim);
  double n = 0;
  for (const auto& c : clips) {
    require(!c.normalized, ErrorCode::NormalizedInput, "stats need denormalized clips");
    for (Eigen::Index i = 0; i < c.frames.rows(); ++i) {
      const VecD row = c.frames.row(i).transpose();
      sum += row;
      sq += row.cwiseProduct(row);
      n += 1;
    }
  }
  require(n > 0, ErrorCode::EmptyClip, "no frames for stats");
  NormStats s;
  s.mean = sum / n;
  s.std = (sq / n - s.mean.cwiseProduct(s.mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(NormStats::kStdFloor);
  s.id = std::move(id);
  return s;
}

inline MotionClip normalize(const MotionClip& clip, const NormStats& stats) {
  clip.validate();
  stats.validate();
  require(!clip.normalized, ErrorCode::NormalizedInput, "clip is already normalized");
  MotionClip out = clip;
  const RowVec<double> mean = stats.mean.transpose();
  const RowVec<double> inv = stats.std.cwiseMax(NormStats::kStdFloor).cwiseInverse().transpose();
  out.frames = (clip.frames.rowwise() - mean).array().rowwise() * inv.array();
  out.normalized = true;
  out.stats_id = stats.id;
  return out;
}

inline MotionClip denormalize(const MotionClip& clip, const NormStats& stats) {
  clip.validate();
  stats.validate();
  require(clip.normalized, ErrorCode::StatsMismatch, "clip is not normalized");
  require(clip.stats_id == stats.id, ErrorCode::StatsMismatch,
          "clip stats '" + clip.stats_id + "' != '" + stats.id + "'");
  MotionClip out = clip;
  const RowVec<double> sd = stats.std.cwiseMax(NormStats::kStdFloor).transpose();
  out.frames = (clip.frames.array().rowwise() * sd.array()).matrix().rowwise() + stats.mean.transpose();
  out.normalized = false;
  return out;
}

// pos[0] = start + delta[0]; pos[k] = pos[k-1] + delta[k].
inline std::vector<Vec3> integrate_root(const MotionClip& clip, const Vec3& start) {
  require(!clip.normalized, ErrorCode::NormalizedInput, "integrate_root needs a denormalized clip");
  std::vector<Vec3> pos(static_cast<std::size_t>(clip.frames.rows()));
  Vec3 p = start;
  for (Eigen::Index k = 0; k < clip.frames.rows(); ++k) {
    p += clip.frames.row(k).segment<3>(kTransOffset).transpose();
    pos[static_cast<std::size_t>(k)] = p;
  }
  return pos;
}

// Root position of the first frame before its delta is applied.
inline Vec3 default_root_start(const Skeleton& sk = default_skeleton()) {
  return Vec3(0, 0, standing_pelvis_height(sk));
}

using JointPositions = std::array<Vec3, kNumJoints>;

struct FkResult {
  std::array<Mat3, kNumJoints> local;
  std::array<Mat3, kNumJoints> world;
  JointPositions pos;
};

inline FkResult forward_kinematics_mats(const std::array<Mat3, kNumJoints>& local, const Skeleton& sk,
                                        const Vec3& root_pos) {
  FkResult r;
  r.local = local;
  r.world[0] = local[0];
  r.pos[0] = root_pos;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = sk.parent[j];
    r.world[j] = r.world[p] * local[j];
    r.pos[j] = r.pos[p] + r.world[p] * sk.rest_offsets[j];
  }
  return r;
}

inline JointPositions forward_kinematics(const PoseFrame& frame, const Skeleton& sk, const Vec3& root_pos) {
  std::array<Mat3, kNumJoints> local;
  for (int j = 0; j < kNumJoints; ++j) local[j] = rot6d_to_matrix(frame.joint_rots[j]);
  return forward_kinematics_mats(local, sk, root_pos).pos;
}

// FK on a raw (denormalized) frame row, tolerant of non-orthogonal 6D input.
template <class Row>
FkResult forward_kinematics_smooth(const Row& row, const Skeleton& sk, const Vec3& root_pos) {
  std::array<Mat3, kNumJoints> local;
  for (int j = 0; j < kNumJoints; ++j) {
    const Vec3 a(row(6 * j), row(6 * j + 1), row(6 * j + 2));
    const Vec3 b(row(6 * j + 3), row(6 * j + 4), row(6 * j + 5));
    local[j] = rot6d_to_matrix_smooth(a, b);
  }
  return forward_kinematics_mats(local, sk, root_pos);
}

// Reverse pass of forward_kinematics_smooth. Adds d(loss)/d(row[0..131]) into
// drow and returns d(loss)/d(root_pos).
// dworld_in optionally carries gradients w.r.t. the world rotations.
template <class Row, class DRow>
Vec3 forward_kinematics_smooth_backward(const Row& row, const FkResult& fk, const Skeleton& sk,
                                        const JointPositions& dpos_in, DRow& drow,
                                        const std::array<Mat3, kNumJoints>* dworld_in = nullptr) {
  JointPositions dpos = dpos_in;
  std::array<Mat3, kNumJoints> dworld;
  if (dworld_in)
    dworld = *dworld_in;
  else
    for (auto& m : dworld) m.setZero();
  std::array<Mat3, kNumJoints> dlocal;
  for (int j = kNumJoints - 1; j >= 1; --j) {
    const int p = sk.parent[j];
    dpos[p] += dpos[j];
    dworld[p] += dpos[j] * sk.rest_offsets[j].transpose();
    dworld[p] += dworld[j] * fk.local[j].transpose();
    dlocal[j] = fk.world[p].transpose() * dworld[j];
  }
  dlocal[0] = dworld[0];
  for (int j = 0; j < kNumJoints; ++j) {
    const Vec3 a(row(6 * j), row(6 * j + 1), row(6 * j + 2));
    const Vec3 b(row(6 * j + 3), row(6 * j + 4), row(6 * j + 5));
    Vec3 da, db;
    rot6d_smooth_backward(a, b, dlocal[j], da, db);
    for (int k = 0; k < 3; ++k) {
      drow(6 * j + k) += da(k);
      drow(6 * j + 3 + k) += db(k);
    }
  }
  return dpos[0];
}

// Heading of the body's forward (+x) axis projected on the ground plane.
inline double root_heading(const Mat3& root_rot) {
  const Vec3 f = root_rot.col(0);
  return std::atan2(f.y(), f.x());
}

}  // namespace modmo
