#pragma once

// Procedural training data: walk-turn-sit clips around armchairs, and
// standing gesture clips paired with beat-aligned audio and a transcript.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "modmo/audio.hpp"
#include "modmo/diffusion.hpp"
#include "modmo/encoders.hpp"
#include "modmo/geometry.hpp"
#include "modmo/pose.hpp"

namespace modmo {

inline const std::string kSitPrompt = "a person walks to the chair and sits down";
inline const std::string kTalkPrompt = "a person stands and talks with hand gestures";
inline const std::string kFusedPrompt = "a person walks to the chair and sits down and talks with hand gestures";

// ---------------------------------------------------------------------------
// Body posing

namespace body {

// Elbow resting on an armrest: upper arm drops with this lateral spread.
inline constexpr double kArmrestLateral = 0.08;
inline constexpr double kHangAngle = kPi / 2 - 0.12;
inline constexpr double kClearance = 1e-3;

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

inline double minimum_jerk(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

// Left side first in every pair.
struct Pose {
  Vec3 root = default_root_start();
  double heading = 0.0;
  double lean = 0.0;  // spine pitch, forward positive
  std::array<double, 2> hip_flex{}, knee_flex{};
  std::array<double, 2> shoulder_down{kHangAngle, kHangAngle};
  std::array<double, 2> shoulder_fwd{}, elbow{};
  double head_pitch = 0.0;
};

inline std::array<Mat3, kNumJoints> local_rotations(const Pose& p) {
  std::array<Mat3, kNumJoints> r;
  for (auto& m : r) m.setIdentity();
  r[kPelvis] = rot_z(p.heading);
  r[kSpine1] = rot_y(p.lean);
  r[kHead] = rot_y(p.head_pitch);
  const int hips[2] = {kLeftHip, kRightHip}, knees[2] = {kLeftKnee, kRightKnee};
  const int ankles[2] = {kLeftAnkle, kRightAnkle};
  const int shoulders[2] = {kLeftShoulder, kRightShoulder}, elbows[2] = {kLeftElbow, kRightElbow};
  for (int s = 0; s < 2; ++s) {
    const double side = s == 0 ? 1.0 : -1.0;
    r[hips[s]] = rot_y(-p.hip_flex[s]);
    r[knees[s]] = rot_y(p.knee_flex[s]);
    r[ankles[s]] = rot_y(p.hip_flex[s] - p.knee_flex[s]);  // keeps the foot flat
    r[shoulders[s]] = rot_y(-p.shoulder_fwd[s]) * rot_x(-side * p.shoulder_down[s]);
    r[elbows[s]] = rot_z(-side * p.elbow[s]);
  }
  return r;
}

// Planar two-link leg IK in the body's sagittal plane. d = ankle - hip with
// d.x forward and d.z up. Returns (hip flex, knee flex).
inline std::pair<double, double> leg_ik(double dx, double dz, double l1, double l2) {
  const double D = std::hypot(dx, dz);
  require(D < l1 + l2 - 1e-9 && D > std::abs(l1 - l2), ErrorCode::UnreachableGoal, "leg cannot reach the floor target");
  const double inner = std::acos(std::clamp((l1 * l1 + l2 * l2 - D * D) / (2 * l1 * l2), -1.0, 1.0));
  const double beta = std::acos(std::clamp((l1 * l1 + D * D - l2 * l2) / (2 * l1 * D), -1.0, 1.0));
  return {std::atan2(dx, -dz) + beta, kPi - inner};
}

// Elbow height above the pelvis with the forearm on the armrest.
inline double armrest_elbow_height(const Skeleton& sk = default_skeleton()) {
  const double shoulder_z = sk.rest_offsets[kSpine1].z() + sk.rest_offsets[kSpine2].z() + sk.rest_offsets[kSpine3].z() +
                            sk.rest_offsets[kLeftCollar].z() + sk.rest_offsets[kLeftShoulder].z();
  const double upper = sk.rest_offsets[kLeftElbow].norm();
  return shoulder_z - std::sqrt(upper * upper - kArmrestLateral * kArmrestLateral);
}

inline double armrest_shoulder_down(const Skeleton& sk = default_skeleton()) {
  return std::acos(kArmrestLateral / sk.rest_offsets[kLeftElbow].norm());
}

}  // namespace body

// ---------------------------------------------------------------------------
// Scenes

struct SyntheticScene {
  ObjectGeometry object;
  GoalSpec goal;  // seated pelvis position, height and facing
  MotionTag tag = MotionTag::EndsSitting;
};

struct SceneConfig {
  double dist_min = 1.6, dist_max = 2.4;  // chair distance from the start (m)
  double bearing_max = 0.3;                // chair bearing from +x (rad)
  double yaw_jitter = 0.4;                 // chair facing relative to "toward the start" (rad)
  double seat_min = 0.2, seat_max = 0.7;   // seated pelvis height (m)
};

// Armchair laid out around a seated pelvis at the goal. The chair front faces
// the goal heading. Seat, armrests and backrest are placed so that the seated
// pose clears every proxy sphere by about 1 mm.
inline ObjectGeometry make_armchair(const GoalSpec& goal, const Skeleton& sk = default_skeleton()) {
  const double h = goal.height;
  const double seat_top = h + sk.rest_offsets[kLeftHip].z() - 0.06 - body::kClearance;
  require(seat_top > 0.02, ErrorCode::UnreachableGoal, "seat height too low for an armchair");
  const double arm_top = h + body::armrest_elbow_height(sk) - 0.06 - 2 * body::kClearance;
  const Mat3 R = rot_z(goal.heading);
  const Vec3 g(goal.position.x(), goal.position.y(), 0.0);
  auto box = [&](Vec3 c, Vec3 half) {
    Box b;
    b.center = g + R * c;
    b.half_extents = half;
    b.orientation = R;
    return b;
  };
  const double x0 = -0.22, x1 = 0.20;  // seat depth relative to the pelvis
  ObjectGeometry o;
  o.primitives.push_back(box({0.5 * (x0 + x1), 0, 0.5 * seat_top}, {0.5 * (x1 - x0), 0.21, 0.5 * seat_top}));
  for (double side : {1.0, -1.0})
    o.primitives.push_back(box({0.5 * (x0 + x1), side * 0.26, 0.5 * arm_top}, {0.5 * (x1 - x0), 0.05, 0.5 * arm_top}));
  const double back_top = seat_top + 0.55;
  o.primitives.push_back(box({-0.18, 0, 0.5 * back_top}, {0.04, 0.31, 0.5 * back_top}));
  return o;
}

inline SyntheticScene make_scene(const GoalSpec& goal, MotionTag tag = MotionTag::EndsSitting) {
  SyntheticScene s;
  s.goal = goal;
  s.goal.heading = wrap_angle(goal.heading);
  s.tag = tag;
  s.object = make_armchair(s.goal);
  return s;
}

inline SyntheticScene sample_scene(std::uint64_t seed, const SceneConfig& cfg = {}) {
  Rng rng(seed);
  const double dist = rng.uniform(cfg.dist_min, cfg.dist_max);
  const double bearing = rng.uniform(-cfg.bearing_max, cfg.bearing_max);
  GoalSpec g;
  g.position = {dist * std::cos(bearing), dist * std::sin(bearing)};
  g.heading = wrap_angle(bearing + kPi + rng.uniform(-cfg.yaw_jitter, cfg.yaw_jitter));
  g.height = rng.uniform(cfg.seat_min, cfg.seat_max);
  return make_scene(g);
}

// ---------------------------------------------------------------------------
// Walk, turn, sit

struct InteractionClip {
  MotionClip clip;
  std::string prompt = kSitPrompt;
};

struct InteractionTiming {
  int k_frames = 10;         // pelvis descent happens over the final K frames
  int turn_frames = 14;      // turning ends where the descent starts
  double stand_off = 0.5;    // standing point in front of the seat (m)
  double max_speed = 3.2;    // m/s, peak of the minimum-jerk walk
};

namespace detail {

inline MotionClip clip_from_poses(const std::vector<body::Pose>& poses, double fps) {
  MotionClip c;
  c.fps = fps;
  c.frames.resize(static_cast<Eigen::Index>(poses.size()), kFrameDim);
  Vec3 prev = default_root_start();
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto rots = body::local_rotations(poses[k]);
    c.frames.row(static_cast<Eigen::Index>(k)) = encode_frame(rots, poses[k].root - prev).transpose();
    prev = poses[k].root;
  }
  return c;
}

}  // namespace detail

inline InteractionClip gen_interaction_clip(const SyntheticScene& scene, int N, double fps, std::uint64_t seed,
                                            const InteractionTiming& tm = {}) {
  const Skeleton& sk = default_skeleton();
  require(fps > 0, ErrorCode::InvalidArgument, "fps must be positive");
  require(scene.tag != MotionTag::None, ErrorCode::InvalidArgument, "interaction clips need a sitting tag");
  const int K = tm.k_frames;
  const int walk_end = N - K - 1;  // last standing frame
  const int turn_start = walk_end - tm.turn_frames;
  require(K >= 2 && turn_start >= 4, ErrorCode::UnreachableGoal, "clip too short for walk, turn and sit");
  scene.object.validate();

  Rng rng(seed);
  const double gait_phase0 = rng.uniform(0, 2 * kPi);
  const double stride = rng.uniform(1.1, 1.4);
  const double swing = rng.uniform(0.25, 0.4);
  const double arm_swing = rng.uniform(0.1, 0.25);

  const GoalSpec& g = scene.goal;
  const Vec3 front(std::cos(g.heading), std::sin(g.heading), 0.0);
  const Vec3 seat(g.position.x(), g.position.y(), g.height);
  const double h0 = standing_pelvis_height(sk);
  const Vec3 start = default_root_start(sk);
  const Vec3 stand = Vec3(seat.x(), seat.y(), h0) + tm.stand_off * front;
  const Vec3 path = stand - start;
  const double travel = path.head<2>().norm();
  require(travel > 0.3, ErrorCode::UnreachableGoal, "chair too close to the start");
  const double t_walk = static_cast<double>(walk_end) / fps;
  require(1.875 * travel / t_walk <= tm.max_speed, ErrorCode::UnreachableGoal, "chair too far for the clip length");
  const double walk_heading = std::atan2(path.y(), path.x());
  const double turn = wrap_angle(g.heading - walk_heading);

  const double l_thigh = sk.rest_offsets[kLeftKnee].norm(), l_shin = sk.rest_offsets[kLeftAnkle].norm();
  const double ankle_h = -sk.rest_offsets[kLeftFoot].z();
  const double down_rest = body::armrest_shoulder_down(sk);

  std::vector<body::Pose> poses(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    body::Pose p;
    if (k <= walk_end) {
      const double u = body::minimum_jerk(static_cast<double>(k) / walk_end);
      const double du = k == 0 || k == walk_end ? 0.0
                                                : (body::minimum_jerk(static_cast<double>(k + 1) / walk_end) -
                                                   body::minimum_jerk(static_cast<double>(k - 1) / walk_end)) /
                                                      2.0;
      const double speed = du * travel * fps;  // m/s
      p.root = start + u * path;
      p.heading = walk_heading + turn * body::smoothstep(static_cast<double>(k - turn_start) / tm.turn_frames);
      const double amp = std::min(1.0, speed / 1.2);
      const double ph = gait_phase0 + 2 * kPi * u * travel / stride;
      for (int s = 0; s < 2; ++s) {
        const double sn = std::sin(ph + s * kPi);
        p.hip_flex[s] = amp * swing * sn;
        p.knee_flex[s] = amp * 2 * swing * std::max(0.0, std::sin(ph + s * kPi + 1.2));
        p.shoulder_fwd[s] = -amp * arm_swing * sn;
        p.elbow[s] = amp * 0.2;
      }
    } else {
      const double s = static_cast<double>(k - walk_end) / K;  // (0, 1]
      const double plan = body::smoothstep(s);
      const double drop = body::smoothstep(s);
      const double arm = body::smoothstep(s / 0.6);
      p.heading = g.heading;
      p.root = stand + plan * (Vec3(seat.x(), seat.y(), h0) - stand);
      p.root.z() = h0 + drop * (g.height - h0);
      p.lean = 0.35 * std::sin(kPi * s);
      const Mat3 R = rot_z(p.heading);
      const int hips[2] = {kLeftHip, kRightHip};
      for (int side = 0; side < 2; ++side) {
        const Vec3 hip = p.root + R * sk.rest_offsets[hips[side]];
        const Vec3 ankle = stand + R * Vec3(0, sk.rest_offsets[hips[side]].y(), 0);
        const Vec3 d = R.transpose() * (Vec3(ankle.x(), ankle.y(), ankle_h) - hip);
        const auto [hf, kf] = body::leg_ik(d.x(), d.z(), l_thigh, l_shin);
        p.hip_flex[side] = hf;
        p.knee_flex[side] = kf;
        p.shoulder_down[side] = body::kHangAngle + arm * (down_rest - body::kHangAngle);
        p.elbow[side] = arm * kPi / 2;
      }
    }
    poses[static_cast<std::size_t>(k)] = p;
  }

  if (scene.tag == MotionTag::StartsSitting) std::reverse(poses.begin(), poses.end());
  InteractionClip out;
  out.clip = detail::clip_from_poses(poses, fps);
  const auto pen = penetration(out.clip, sk, default_body_proxy(), scene.object);
  require(pen.penetrating_frames == 0, ErrorCode::UnreachableGoal,
          "generated motion intersects the object (" + std::to_string(pen.penetrating_frames) + " frames)");
  return out;
}

// ---------------------------------------------------------------------------
// Gestures with speech

struct GestureClip {
  MotionClip clip;
  SpeechInput speech;
  std::vector<double> beat_times;  // snapped to frame times
  std::string prompt = kTalkPrompt;
};

struct SpeechSynthConfig {
  double sample_rate = 16000.0;
  double click_amp = 0.6;
  double click_decay = 0.008;  // s
  double noise_amp = 0.3;      // band-limited part of each syllable
  double noise_decay = 0.03;   // s
  double syllable = 0.15;      // s, faded to exact silence
};

// Beat times with gaps in [min_gap, max_gap], clear of the clip ends.
inline std::vector<double> sample_beats(std::uint64_t seed, int N, double fps, double min_gap = 0.3,
                                        double max_gap = 0.6) {
  Rng rng(seed);
  const double end = (N - 1) / fps;
  std::vector<double> b;
  double t = rng.uniform(0.2, 0.45);
  while (t < end - 0.2) {
    b.push_back(std::round(t * fps) / fps);
    t += rng.uniform(min_gap, max_gap);
  }
  return b;
}

inline const std::vector<std::string>& synthetic_vocabulary() {
  static const std::vector<std::string> v = {"so",    "well",  "then",  "we",     "really", "think", "maybe",
                                             "look",  "here",  "right", "people", "always", "just",  "about",
                                             "could", "going", "today", "never",  "good",   "idea"};
  return v;
}

// Silence with one syllable per beat: a broadband click plus band-limited
// noise, both decaying, tapered to zero before the next beat.
inline SpeechInput synth_speech(std::span<const double> beats, double duration, std::uint64_t seed,
                                const SpeechSynthConfig& cfg = {}) {
  Rng rng(seed);
  SpeechInput s;
  s.sample_rate = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration * cfg.sample_rate));
  s.samples.assign(n, 0.0);
  const auto len = static_cast<std::size_t>(cfg.syllable * cfg.sample_rate);
  for (double b : beats) {
    const auto i0 = static_cast<std::size_t>(std::llround(b * cfg.sample_rate));
    double lp1 = 0.0, lp2 = 0.0;  // difference of two one-pole low-passes
    for (std::size_t i = 0; i < len && i0 + i < n; ++i) {
      const double t = static_cast<double>(i) / cfg.sample_rate;
      const double w = rng.normal();
      lp1 += 0.5 * (w - lp1);
      lp2 += 0.05 * (w - lp2);
      const double taper = i < len * 7 / 10 ? 1.0 : 0.5 + 0.5 * std::cos(kPi * (i - len * 7 / 10) / (len - len * 7 / 10));
      s.samples[i0 + i] += taper * (cfg.click_amp * std::exp(-t / cfg.click_decay) * rng.uniform(-1, 1) +
                                    cfg.noise_amp * std::exp(-t / cfg.noise_decay) * (lp1 - lp2));
    }
  }
  const auto& vocab = synthetic_vocabulary();
  double t = 0.0;
  while (t < duration - 1e-9) {
    const double e = std::min(duration, t + rng.uniform(0.15, 0.45));
    s.transcript.push_back({vocab[rng.below(vocab.size())], t, e});
    t = e;
  }
  return s;
}

// Elbow flexion swings between extremes with minimum-jerk easing and a short
// hold on each beat, so joint speed is zero exactly at every beat. Lower body
// and root stay still.
inline GestureClip gen_gesture_clip(std::span<const double> beat_times, int N, double fps, std::uint64_t seed,
                                    const SpeechSynthConfig& audio = {}) {
  require(N >= 8 && fps > 0, ErrorCode::InvalidArgument, "gesture clip needs N >= 8 and fps > 0");
  const double end = (N - 1) / fps;
  std::vector<double> beats;
  for (double b : beat_times) {
    const double snapped = std::round(b * fps) / fps;
    require(snapped >= 2 / fps && snapped <= end - 2 / fps, ErrorCode::BadBeats,
            "beat times must lie inside the clip, two frames clear of either end");
    require(beats.empty() || snapped - beats.back() >= 2.5 / fps, ErrorCode::BadBeats,
            "beats must be increasing and at least three frames apart");
    beats.push_back(snapped);
  }
  require(!beats.empty(), ErrorCode::BadBeats, "need at least one beat");

  Rng rng(seed);
  std::vector<double> knots{0.0};
  knots.insert(knots.end(), beats.begin(), beats.end());
  knots.push_back(end);
  // Alternating extremes; each side gets its own amplitude.
  std::vector<std::array<double, 2>> elbow(knots.size()), fwd(knots.size());
  const double base_l = rng.uniform(0.2, 0.5), base_r = rng.uniform(0.2, 0.5);
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const bool up = i % 2 == 1;
    elbow[i] = {base_l + (up ? rng.uniform(0.7, 1.2) : 0.0), base_r + (up ? rng.uniform(0.7, 1.2) : 0.0)};
    fwd[i] = {up ? rng.uniform(0.2, 0.45) : 0.05, up ? rng.uniform(0.2, 0.45) : 0.05};
  }
  const double nod = rng.uniform(0.05, 0.12);

  std::vector<body::Pose> poses(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    const double t = k / fps;
    std::size_t i = 0;
    while (i + 2 < knots.size() && t >= knots[i + 1]) ++i;
    // Hold each beat pose for one frame either side so the stroke lands on the beat frame.
    const double h0 = i == 0 ? 0.0 : 1.0 / fps;
    const double h1 = i + 2 == knots.size() ? 0.0 : 1.0 / fps;
    const double u = (t - knots[i] - h0) / (knots[i + 1] - knots[i] - h0 - h1);
    const double w = body::minimum_jerk(std::clamp(u, 0.0, 1.0));
    body::Pose p;
    for (int s = 0; s < 2; ++s) {
      p.elbow[s] = elbow[i][s] + w * (elbow[i + 1][s] - elbow[i][s]);
      p.shoulder_fwd[s] = fwd[i][s] + w * (fwd[i + 1][s] - fwd[i][s]);
    }
    p.head_pitch = nod * (i % 2 == 0 ? w : 1.0 - w);
    poses[static_cast<std::size_t>(k)] = p;
  }

  GestureClip out;
  out.clip = detail::clip_from_poses(poses, fps);
  out.beat_times = beats;
  out.speech = synth_speech(beats, N / fps, derive_seed(seed, 1), audio);
  return out;
}

}  // namespace modmo
