#pragma once

// MotionClip container:
//
//   MODMO-CLIP 1\n
//   fps=<%.17g>\n
//   frame_count=<N>\n
//   dims=135\n
//   normalized=<0|1>\n
//   stats_id=<string, may be empty>\n
//   meta=<single-line JSON, optional>\n
//   end_header\n
//   <N * 135 little-endian IEEE-754 float64, row-major>
//
// The header is ASCII; unknown keys are rejected.

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "modmo/pose.hpp"

namespace modmo {

inline constexpr const char* kClipMagic = "MODMO-CLIP 1";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_clip(const std::string& path, const MotionClip& clip, const std::string& meta_json = {}) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << kClipMagic << '\n'
      << "fps=" << format_double(clip.fps) << '\n'
      << "frame_count=" << clip.frames.rows() << '\n'
      << "dims=" << kFrameDim << '\n'
      << "normalized=" << (clip.normalized ? 1 : 0) << '\n'
      << "stats_id=" << clip.stats_id << '\n';
  if (!meta_json.empty()) {
    require(meta_json.find('\n') == std::string::npos, ErrorCode::Format, "meta must be a single line");
    out << "meta=" << meta_json << '\n';
  }
  out << "end_header\n";
  static_assert(std::endian::native == std::endian::little, "clip files are little-endian");
  for (Eigen::Index i = 0; i < clip.frames.rows(); ++i)
    for (Eigen::Index j = 0; j < kFrameDim; ++j) {
      const double v = clip.frames(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  require(out.good(), ErrorCode::Io, "write failed for " + path);
}

struct LoadedClip {
  MotionClip clip;
  std::string meta_json;
};

inline LoadedClip read_clip_with_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  require(line == kClipMagic, ErrorCode::Format, path + ": bad magic");
  LoadedClip lc;
  long long frames = -1;
  int dims = -1;
  bool have_fps = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::Format, path + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "fps") {
        lc.clip.fps = std::stod(val);
        have_fps = true;
      } else if (key == "frame_count") {
        frames = std::stoll(val);
      } else if (key == "dims") {
        dims = std::stoi(val);
      } else if (key == "normalized") {
        lc.clip.normalized = (val == "1");
      } else if (key == "stats_id") {
        lc.clip.stats_id = val;
      } else if (key == "meta") {
        lc.meta_json = val;
      } else {
        fail(ErrorCode::Format, path + ": unknown header key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::Format, path + ": bad value for " + key);
    }
  }
  require(line == "end_header", ErrorCode::Format, path + ": missing end_header");
  require(have_fps && frames >= 0, ErrorCode::Format, path + ": missing fps or frame_count");
  require(dims == kFrameDim, ErrorCode::Format, path + ": dims must be 135");
  lc.clip.frames.resize(frames, kFrameDim);
  for (long long i = 0; i < frames; ++i)
    for (int j = 0; j < kFrameDim; ++j) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      lc.clip.frames(i, j) = v;
    }
  require(static_cast<bool>(in), ErrorCode::Format, path + ": truncated frame data");
  lc.clip.validate();
  return lc;
}

inline MotionClip read_clip(const std::string& path) { return read_clip_with_meta(path).clip; }

}  // namespace modmo
