#pragma once

// Objects as unions of analytic primitives, Basis Point Set features, body
// sphere proxies and penetration measurement.

#include <algorithm>
#include <fstream>
#include <limits>
#include <variant>
#include <vector>

#include "json.hpp"
#include "modmo/pose.hpp"

namespace modmo {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Constant(0.5);
  Mat3 orientation = Mat3::Identity();  // local -> world
};

using Primitive = std::variant<Sphere, Box>;

inline double sdf(const Sphere& s, const Vec3& p) { return (p - s.center).norm() - s.radius; }

inline double sdf(const Box& b, const Vec3& p) {
  const Vec3 q = (b.orientation.transpose() * (p - b.center)).cwiseAbs() - b.half_extents;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

inline Vec3 sdf_gradient(const Sphere& s, const Vec3& p) {
  const Vec3 d = p - s.center;
  const double n = d.norm();
  return n > 0 ? Vec3(d / n) : Vec3(Vec3::UnitZ());
}

inline Vec3 sdf_gradient(const Box& b, const Vec3& p) {
  const Vec3 local = b.orientation.transpose() * (p - b.center);
  const Vec3 q = local.cwiseAbs() - b.half_extents;
  Vec3 g = Vec3::Zero();
  if (q.maxCoeff() > 0.0) {
    const Vec3 out = q.cwiseMax(0.0);
    const double n = out.norm();
    for (int k = 0; k < 3; ++k) g(k) = out(k) / n * (local(k) < 0 ? -1.0 : 1.0);
  } else {
    Eigen::Index k;
    q.maxCoeff(&k);
    g(k) = local(k) < 0 ? -1.0 : 1.0;
  }
  return b.orientation * g;
}

struct ObjectGeometry {
  std::vector<Primitive> primitives;

  void validate() const {
    require(!primitives.empty(), ErrorCode::InvalidArgument, "object needs at least one primitive");
    for (const auto& prim : primitives) {
      if (const auto* s = std::get_if<Sphere>(&prim)) {
        require(s->radius > 0, ErrorCode::InvalidArgument, "sphere radius must be positive");
      } else {
        const auto& b = std::get<Box>(prim);
        require((b.half_extents.array() > 0).all(), ErrorCode::InvalidArgument,
                "box half extents must be positive");
      }
    }
  }

  // Grows every primitive in place: radii and half extents times factor,
  // centers and orientations unchanged.
  ObjectGeometry scaled(double factor) const {
    require(factor > 0, ErrorCode::InvalidArgument, "scale factor must be positive");
    ObjectGeometry o = *this;
    for (auto& prim : o.primitives) {
      std::visit(
          [&](auto& p) {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, Sphere>)
              p.radius *= factor;
            else
              p.half_extents *= factor;
          },
          prim);
    }
    return o;
  }
};

inline double sdf(const ObjectGeometry& obj, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : obj.primitives) d = std::min(d, std::visit([&](const auto& x) { return sdf(x, p); }, prim));
  return d;
}

// Value and gradient of the min-union SDF (gradient of the active primitive).
inline double sdf_with_gradient(const ObjectGeometry& obj, const Vec3& p, Vec3& grad) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : obj.primitives) {
    const double v = std::visit([&](const auto& x) { return sdf(x, p); }, prim);
    if (v < d) {
      d = v;
      grad = std::visit([&](const auto& x) { return sdf_gradient(x, p); }, prim);
    }
  }
  return d;
}

struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

inline BoundingSphere bounding_sphere(const ObjectGeometry& obj) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  auto extend = [&](const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };
  for (const auto& prim : obj.primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim)) {
      extend(s->center - Vec3::Constant(s->radius));
      extend(s->center + Vec3::Constant(s->radius));
    } else {
      const auto& b = std::get<Box>(prim);
      for (int c = 0; c < 8; ++c) {
        const Vec3 corner((c & 1 ? 1 : -1) * b.half_extents.x(), (c & 2 ? 1 : -1) * b.half_extents.y(),
                          (c & 4 ? 1 : -1) * b.half_extents.z());
        extend(b.center + b.orientation * corner);
      }
    }
  }
  BoundingSphere bs;
  bs.center = 0.5 * (lo + hi);
  for (const auto& prim : obj.primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim)) {
      bs.radius = std::max(bs.radius, (s->center - bs.center).norm() + s->radius);
    } else {
      const auto& b = std::get<Box>(prim);
      for (int c = 0; c < 8; ++c) {
        const Vec3 corner((c & 1 ? 1 : -1) * b.half_extents.x(), (c & 2 ? 1 : -1) * b.half_extents.y(),
                          (c & 4 ? 1 : -1) * b.half_extents.z());
        bs.radius = std::max(bs.radius, (b.center + b.orientation * corner - bs.center).norm());
      }
    }
  }
  return bs;
}

// ---------------------------------------------------------------------------
// Basis Point Sets

struct BasisPointSet {
  std::vector<Vec3> points;
  std::uint64_t seed = 0;
  double radius = 1.0;
};

inline constexpr int kDefaultNumBps = 512;

// Uniform sample in the ball of the given radius (rejection from the cube).
inline BasisPointSet bps_generate(std::uint64_t seed, int n_bps, double radius) {
  require(n_bps > 0 && radius > 0, ErrorCode::InvalidArgument, "bps needs n_bps > 0 and radius > 0");
  Rng rng(seed);
  BasisPointSet bps;
  bps.seed = seed;
  bps.radius = radius;
  bps.points.reserve(static_cast<std::size_t>(n_bps));
  while (static_cast<int>(bps.points.size()) < n_bps) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (p.squaredNorm() <= 1.0) bps.points.push_back(p * radius);
  }
  return bps;
}

// Places a canonical (origin-centered) basis into the object's bounding
// sphere: point' = center + point * (R_bound / bps.radius).
inline BasisPointSet bps_fit_to_object(const BasisPointSet& canonical, const ObjectGeometry& obj) {
  const BoundingSphere bs = bounding_sphere(obj);
  BasisPointSet out = canonical;
  out.radius = bs.radius;
  const double s = bs.radius / canonical.radius;
  for (auto& p : out.points) p = bs.center + p * s;
  return out;
}

// Unsigned distance from every basis point to the object surface.
inline VecD bps_object_features(const BasisPointSet& bps, const ObjectGeometry& obj) {
  VecD f(static_cast<Eigen::Index>(bps.points.size()));
  for (std::size_t i = 0; i < bps.points.size(); ++i) f(static_cast<Eigen::Index>(i)) = std::abs(sdf(obj, bps.points[i]));
  return f;
}

// Distance from every basis point to its nearest joint.
inline VecD bps_interaction_features(const BasisPointSet& bps, std::span<const Vec3> joints) {
  VecD f(static_cast<Eigen::Index>(bps.points.size()));
  for (std::size_t i = 0; i < bps.points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& j : joints) best = std::min(best, (bps.points[i] - j).squaredNorm());
    f(static_cast<Eigen::Index>(i)) = std::sqrt(best);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Body proxies and penetration

struct ProxySphere {
  int joint = 0;
  Vec3 local_offset = Vec3::Zero();
  double radius = 0.06;
};

struct BodyProxy {
  std::vector<ProxySphere> spheres;

  void validate() const {
    for (const auto& s : spheres) {
      require(s.radius > 0, ErrorCode::InvalidArgument, "proxy radius must be positive");
      require(s.joint >= 0 && s.joint < kNumJoints, ErrorCode::InvalidArgument, "proxy joint out of range");
    }
  }
};

// One sphere per joint: 0.10 m on pelvis and spine, 0.06 m elsewhere.
inline const BodyProxy& default_body_proxy() {
  static const BodyProxy p = [] {
    BodyProxy b;
    for (int j = 0; j < kNumJoints; ++j) {
      const bool torso = j == kPelvis || j == kSpine1 || j == kSpine2 || j == kSpine3;
      b.spheres.push_back({j, Vec3::Zero(), torso ? 0.10 : 0.06});
    }
    return b;
  }();
  return p;
}

inline Vec3 proxy_center(const ProxySphere& s, const FkResult& fk) {
  return fk.pos[static_cast<std::size_t>(s.joint)] + fk.world[static_cast<std::size_t>(s.joint)] * s.local_offset;
}

// Per-frame FK of a denormalized clip with the root integrated from start.
inline std::vector<FkResult> clip_kinematics(const MotionClip& clip, const Skeleton& sk,
                                             const Vec3& start = default_root_start()) {
  const auto roots = integrate_root(clip, start);
  std::vector<FkResult> out;
  out.reserve(roots.size());
  for (Eigen::Index k = 0; k < clip.frames.rows(); ++k)
    out.push_back(forward_kinematics_smooth(clip.frames.row(k), sk, roots[static_cast<std::size_t>(k)]));
  return out;
}

struct PenetrationStats {
  double value = 0.0;  // mean depth over penetrating proxy samples (m)
  double ratio = 0.0;  // fraction of frames with any penetration
  long penetrating_samples = 0;
  long penetrating_frames = 0;
};

// A proxy sphere penetrates when sdf(center) - radius < 0; its depth is
// |sdf(center) - radius|.
inline PenetrationStats penetration(const MotionClip& clip, const Skeleton& sk, const BodyProxy& proxy,
                                    const ObjectGeometry& obj) {
  require(!clip.normalized, ErrorCode::NormalizedInput, "penetration needs a denormalized clip");
  PenetrationStats st;
  if (clip.frames.rows() == 0) return st;
  double depth_sum = 0.0;
  for (const auto& fk : clip_kinematics(clip, sk)) {
    bool any = false;
    for (const auto& s : proxy.spheres) {
      const double d = sdf(obj, proxy_center(s, fk)) - s.radius;
      if (d < 0) {
        depth_sum += -d;
        ++st.penetrating_samples;
        any = true;
      }
    }
    if (any) ++st.penetrating_frames;
  }
  st.value = st.penetrating_samples ? depth_sum / static_cast<double>(st.penetrating_samples) : 0.0;
  st.ratio = static_cast<double>(st.penetrating_frames) / static_cast<double>(clip.frames.rows());
  return st;
}

inline double penetration_value(const MotionClip& clip, const Skeleton& sk, const BodyProxy& proxy,
                                const ObjectGeometry& obj) {
  return penetration(clip, sk, proxy, obj).value;
}

inline double penetration_ratio(const MotionClip& clip, const Skeleton& sk, const BodyProxy& proxy,
                                const ObjectGeometry& obj) {
  return penetration(clip, sk, proxy, obj).ratio;
}

// ---------------------------------------------------------------------------
// Object spec file (JSON):
//   {"primitives": [
//      {"type": "sphere", "center": [x,y,z], "radius": r},
//      {"type": "box", "center": [x,y,z], "half_extents": [hx,hy,hz],
//       "yaw": radians | "quaternion": [w,x,y,z]}   (orientation optional)
//   ]}

inline Vec3 json_vec3(const nlohmann::json& j, const char* key) {
  require(j.contains(key) && j[key].is_array() && j[key].size() == 3, ErrorCode::Format,
          std::string("object field '") + key + "' must be a 3-array");
  return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
}

inline ObjectGeometry object_from_json(const nlohmann::json& j) {
  require(j.contains("primitives") && j["primitives"].is_array(), ErrorCode::Format,
          "object spec needs a 'primitives' array");
  ObjectGeometry obj;
  for (const auto& p : j["primitives"]) {
    const std::string type = p.value("type", "");
    if (type == "sphere") {
      obj.primitives.push_back(Sphere{json_vec3(p, "center"), p.at("radius").get<double>()});
    } else if (type == "box") {
      Box b{json_vec3(p, "center"), json_vec3(p, "half_extents"), Mat3::Identity()};
      if (p.contains("quaternion")) {
        const auto& q = p["quaternion"];
        require(q.is_array() && q.size() == 4, ErrorCode::Format, "quaternion must be [w,x,y,z]");
        b.orientation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                           q[3].get<double>())
                            .normalized()
                            .toRotationMatrix();
      } else if (p.contains("yaw")) {
        b.orientation = rot_z(p["yaw"].get<double>());
      }
      obj.primitives.push_back(b);
    } else {
      fail(ErrorCode::Format, "unknown primitive type '" + type + "'");
    }
  }
  obj.validate();
  return obj;
}

inline nlohmann::json object_to_json(const ObjectGeometry& obj) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& prim : obj.primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim)) {
      prims.push_back({{"type", "sphere"}, {"center", {s->center.x(), s->center.y(), s->center.z()}}, {"radius", s->radius}});
    } else {
      const auto& b = std::get<Box>(prim);
      const Eigen::Quaterniond q(b.orientation);
      prims.push_back({{"type", "box"},
                       {"center", {b.center.x(), b.center.y(), b.center.z()}},
                       {"half_extents", {b.half_extents.x(), b.half_extents.y(), b.half_extents.z()}},
                       {"quaternion", {q.w(), q.x(), q.y(), q.z()}}});
    }
  }
  return {{"primitives", prims}};
}

inline ObjectGeometry read_object(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  try {
    return object_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path + ": " + e.what());
  }
}

inline void write_object(const std::string& path, const ObjectGeometry& obj) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << object_to_json(obj).dump(2) << '\n';
}

}  // namespace modmo
