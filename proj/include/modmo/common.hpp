#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace modmo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatD = Mat<double>;
using VecD = Eigen::VectorXd;

enum class ErrorCode {
  DegenerateRotation,
  NotARotation,
  NormalizedInput,
  StatsMismatch,
  EmptyPrompt,
  EmptyAudio,
  BadTiming,
  LengthMismatch,
  MissingObject,
  MissingCondition,
  StepOutOfRange,
  ShapeMismatch,
  NoTrace,
  BadWindow,
  ClipTooShort,
  DimensionMismatch,
  NotPSD,
  TooFewSamples,
  EmptyClip,
  UnreachableGoal,
  BadBeats,
  MissingPrereq,
  DataMismatch,
  InvalidArgument,
  Io,
  Format,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::DegenerateRotation: return "DegenerateRotation";
    case ErrorCode::NotARotation: return "NotARotation";
    case ErrorCode::NormalizedInput: return "NormalizedInput";
    case ErrorCode::StatsMismatch: return "StatsMismatch";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::BadTiming: return "BadTiming";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingObject: return "MissingObject";
    case ErrorCode::MissingCondition: return "MissingCondition";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoTrace: return "NoTrace";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::UnreachableGoal: return "UnreachableGoal";
    case ErrorCode::BadBeats: return "BadBeats";
    case ErrorCode::MissingPrereq: return "MissingPrereq";
    case ErrorCode::DataMismatch: return "DataMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Errors caused by bad user input rather than a failing computation.
  bool is_validation() const noexcept {
    switch (code_) {
      case ErrorCode::Io:
      case ErrorCode::UnreachableGoal:
      case ErrorCode::NoTrace:
        return false;
      default:
        return true;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

constexpr double kPi = std::numbers::pi;

// Deterministic random source. The transforms are written out here instead of
// using <random> distributions, whose output differs between standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  template <class T>
  void fill_normal(Mat<T>& m, double stddev = 1.0) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * normal());
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a base seed with a stream index so sub-streams are independent of
// the order in which they are requested.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a, used for hashing tokens into embedding buckets.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;  // (-pi, pi]
}

}  // namespace modmo
