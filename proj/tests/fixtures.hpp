#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "modmo/geometry.hpp"
#include "modmo/pose.hpp"

namespace modmo::testing {

inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline MotionClip random_clip(Rng& rng, int n, double rot_noise = 0.0) {
  MotionClip c;
  c.fps = 20.0;
  c.frames.resize(n, kFrameDim);
  for (int k = 0; k < n; ++k) {
    std::array<Mat3, kNumJoints> rots;
    for (auto& r : rots) r = random_rotation(rng);
    FrameVec v = encode_frame(rots, Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.05);
    for (int i = 0; i < kTransOffset; ++i) v(i) += rot_noise * rng.normal();
    c.frames.row(k) = v.transpose();
  }
  return c;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("modmo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline ObjectGeometry unit_box() {
  ObjectGeometry o;
  o.primitives.push_back(Box{Vec3::Zero(), Vec3::Constant(0.5), Mat3::Identity()});
  return o;
}

// Dense uniform samples on the surface of a single box, by face area.
inline std::vector<Vec3> box_surface_samples(const Box& b, int n, Rng& rng) {
  const Vec3 h = b.half_extents;
  const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  const double total = areas[0] + areas[1] + areas[2];
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0, total);
    const int axis = u < areas[0] ? 0 : u < areas[0] + areas[1] ? 1 : 2;
    Vec3 p(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()), rng.uniform(-h.z(), h.z()));
    p(axis) = rng.uniform() < 0.5 ? -h(axis) : h(axis);
    out.push_back(b.center + b.orientation * p);
  }
  return out;
}

// Rest pose, no root motion.
inline MotionClip static_clip(int n) {
  MotionClip c;
  c.frames = MatD::Zero(n, kFrameDim);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < kNumJoints; ++j) {
      c.frames(k, 6 * j) = 1;
      c.frames(k, 6 * j + 4) = 1;
    }
  return c;
}

inline BodyProxy pelvis_only(double r) {
  BodyProxy p;
  p.spheres.push_back({kPelvis, Vec3::Zero(), r});
  return p;
}

}  // namespace modmo::testing
