#pragma once

// Plain-text exports for plotting: joint trajectories as CSV and the root
// path (plus the object footprint, if any) as SVG.

#include <fstream>
#include <sstream>

#include "modmo/geometry.hpp"
#include "modmo/motion_io.hpp"

namespace modmo {

// frame,time,joint,name,x,y,z
inline std::string joints_csv(const MotionClip& clip, const Skeleton& sk = default_skeleton()) {
  require(!clip.normalized, ErrorCode::NormalizedInput, "export needs a denormalized clip");
  std::ostringstream os;
  os << "frame,time,joint,name,x,y,z\n";
  const auto fks = clip_kinematics(clip, sk);
  for (std::size_t k = 0; k < fks.size(); ++k)
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec3& p = fks[k].pos[static_cast<std::size_t>(j)];
      os << k << ',' << format_double(static_cast<double>(k) / clip.fps) << ',' << j << ','
         << kJointNames[static_cast<std::size_t>(j)] << ',' << format_double(p.x()) << ',' << format_double(p.y())
         << ',' << format_double(p.z()) << '\n';
    }
  return os.str();
}

// Top view, x to the right and y up, 100 px per meter.
inline std::string root_path_svg(const MotionClip& clip, const ObjectGeometry* object = nullptr) {
  require(!clip.normalized, ErrorCode::NormalizedInput, "export needs a denormalized clip");
  const auto roots = integrate_root(clip, default_root_start());
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  auto grow = [&](double x, double y) {
    x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
  };
  for (const auto& r : roots) grow(r.x(), r.y());
  std::vector<std::array<Vec3, 4>> boxes;
  if (object)
    for (const auto& prim : object->primitives)
      if (const Box* b = std::get_if<Box>(&prim)) {
        std::array<Vec3, 4> c;
        const double sx[4] = {-1, 1, 1, -1}, sy[4] = {-1, -1, 1, 1};
        for (int i = 0; i < 4; ++i) {
          c[static_cast<std::size_t>(i)] =
              b->center + b->orientation * Vec3(sx[i] * b->half_extents.x(), sy[i] * b->half_extents.y(), 0);
          grow(c[static_cast<std::size_t>(i)].x(), c[static_cast<std::size_t>(i)].y());
        }
        boxes.push_back(c);
      }
  const double s = 100.0, pad = 0.3;
  const double w = (x1 - x0 + 2 * pad) * s, h = (y1 - y0 + 2 * pad) * s;
  auto px = [&](double x) { return format_double(std::round((x - x0 + pad) * s * 100) / 100); };
  auto py = [&](double y) { return format_double(std::round((y1 - y + pad) * s * 100) / 100); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_double(std::ceil(w)) << "\" height=\""
     << format_double(std::ceil(h)) << "\">\n";
  for (const auto& c : boxes) {
    os << "  <polygon fill=\"#ddd\" stroke=\"#888\" points=\"";
    for (const auto& p : c) os << px(p.x()) << ',' << py(p.y()) << ' ';
    os << "\"/>\n";
  }
  os << "  <polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
  for (const auto& r : roots) os << px(r.x()) << ',' << py(r.y()) << ' ';
  os << "\"/>\n";
  if (!roots.empty()) {
    os << "  <circle cx=\"" << px(roots.front().x()) << "\" cy=\"" << py(roots.front().y())
       << "\" r=\"4\" fill=\"#2a2\"/>\n";
    os << "  <circle cx=\"" << px(roots.back().x()) << "\" cy=\"" << py(roots.back().y())
       << "\" r=\"4\" fill=\"#c22\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << text;
  require(out.good(), ErrorCode::Io, "write failed for " + path);
}

}  // namespace modmo
