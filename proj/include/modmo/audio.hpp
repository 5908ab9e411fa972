#pragma once

// Speech input containers, WAV/transcript files and the short-time band
// energy front end.

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "modmo/common.hpp"

namespace modmo {

struct TimedToken {
  std::string token;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct SpeechInput {
  std::vector<double> samples;  // mono
  double sample_rate = 16000.0;
  std::vector<TimedToken> transcript;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Tokens must lie inside the audio, have end > start, and be sorted without
// overlap.
inline void validate_transcript(const SpeechInput& s) {
  const double dur = s.duration() + 1e-9;
  double prev_end = 0.0;
  for (const auto& t : s.transcript) {
    require(t.start_s >= 0.0 && t.end_s > t.start_s, ErrorCode::BadTiming,
            "token '" + t.token + "' has a malformed interval");
    require(t.end_s <= dur, ErrorCode::BadTiming, "token '" + t.token + "' ends after the audio");
    require(t.start_s >= prev_end - 1e-12, ErrorCode::BadTiming, "tokens overlap or are unsorted");
    prev_end = t.end_s;
  }
}

inline constexpr int kDefaultBands = 16;
inline constexpr double kLogEnergyFloor = -23.025850929940457;  // log(1e-10)

struct AudioFrontEndConfig {
  int n_bands = kDefaultBands;
  double f_min = 50.0;
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Per motion frame k (centered at k / fps): log energies of n_bands
// triangular mel bands over a Hann window of two hops, then the frame RMS.
// Output has n_bands + 1 columns. Log energies are log(max(E, 1e-10)).
// Row count is ceil(duration * fps) unless n_frames >= 0 is given, in which
// case the sequence is padded (silence) or truncated.
inline MatD audio_features(const SpeechInput& speech, double fps, const AudioFrontEndConfig& cfg = {},
                           Eigen::Index n_frames = -1) {
  require(!speech.samples.empty(), ErrorCode::EmptyAudio, "no audio samples");
  require(speech.sample_rate > 0 && fps > 0, ErrorCode::InvalidArgument, "rates must be positive");
  const double hop = speech.sample_rate / fps;
  const int win = std::max(4, static_cast<int>(std::lround(2.0 * hop)));
  int nfft = 1;
  while (nfft < win) nfft <<= 1;
  const Eigen::Index natural = static_cast<Eigen::Index>(std::ceil(speech.duration() * fps - 1e-9));
  const Eigen::Index rows = n_frames >= 0 ? n_frames : natural;

  // Triangular filters on the mel scale.
  const int nbins = nfft / 2 + 1;
  const double nyq = speech.sample_rate / 2.0;
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_bands + 2));
  const double m0 = hz_to_mel(cfg.f_min), m1 = hz_to_mel(nyq);
  for (int i = 0; i < cfg.n_bands + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(m0 + (m1 - m0) * i / (cfg.n_bands + 1));
  MatD filt = MatD::Zero(cfg.n_bands, nbins);
  for (int b = 0; b < cfg.n_bands; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)], mid = edges[static_cast<std::size_t>(b) + 1],
                 hi = edges[static_cast<std::size_t>(b) + 2];
    for (int k = 0; k < nbins; ++k) {
      const double f = k * speech.sample_rate / nfft;
      if (f > lo && f < hi) filt(b, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * (i + 0.5) / win);

  double* in = fftw_alloc_real(static_cast<std::size_t>(nfft));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(nbins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(nfft, in, out, FFTW_ESTIMATE);

  MatD feats(rows, cfg.n_bands + 1);
  VecD power(nbins);
  const auto n_samples = static_cast<long>(speech.samples.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const long center = std::lround(static_cast<double>(r) * hop);
    const long begin = center - win / 2;
    std::fill(in, in + nfft, 0.0);
    double sq = 0.0;
    for (int i = 0; i < win; ++i) {
      const long s = begin + i;
      const double x = (s >= 0 && s < n_samples) ? speech.samples[static_cast<std::size_t>(s)] : 0.0;
      sq += x * x;
      in[i] = x * window[static_cast<std::size_t>(i)];
    }
    fftw_execute(plan);
    for (int k = 0; k < nbins; ++k) power(k) = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const VecD e = filt * power;
    for (int b = 0; b < cfg.n_bands; ++b) feats(r, b) = std::log(std::max(e(b), 1e-10));
    feats(r, cfg.n_bands) = std::sqrt(sq / win);
  }
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return feats;
}

// Spectral flux over the log band energies: sum_b max(0, E[k,b] - E[k-1,b]).
inline VecD onset_strength(const MatD& audio_feats, int n_bands = kDefaultBands) {
  VecD flux = VecD::Zero(audio_feats.rows());
  for (Eigen::Index k = 1; k < audio_feats.rows(); ++k)
    flux(k) = (audio_feats.row(k).head(n_bands) - audio_feats.row(k - 1).head(n_bands)).cwiseMax(0.0).sum();
  return flux;
}

// ---------------------------------------------------------------------------
// WAV (RIFF, mono, PCM16 or IEEE float32) and transcript JSON.

inline SpeechInput read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
  };
  auto u16 = [&](std::size_t off) {
    std::uint16_t v;
    std::memcpy(&v, buf.data() + off, 2);
    return v;
  };
  require(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 && std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          ErrorCode::Format, path + ": not a RIFF/WAVE file");
  std::size_t off = 12;
  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  SpeechInput s;
  bool have_data = false;
  while (off + 8 <= buf.size()) {
    const std::string id(buf.data() + off, 4);
    const std::uint32_t size = u32(off + 4);
    const std::size_t body = off + 8;
    require(body + size <= buf.size(), ErrorCode::Format, path + ": truncated chunk " + id);
    if (id == "fmt ") {
      format = u16(body);
      channels = u16(body + 2);
      rate = u32(body + 4);
      bits = u16(body + 14);
    } else if (id == "data") {
      require(channels == 1, ErrorCode::Format, path + ": only mono audio is supported");
      if (format == 1 && bits == 16) {
        for (std::size_t i = 0; i + 1 < size; i += 2) {
          std::int16_t v;
          std::memcpy(&v, buf.data() + body + i, 2);
          s.samples.push_back(v / 32768.0);
        }
      } else if (format == 3 && bits == 32) {
        for (std::size_t i = 0; i + 3 < size; i += 4) {
          float v;
          std::memcpy(&v, buf.data() + body + i, 4);
          s.samples.push_back(v);
        }
      } else {
        fail(ErrorCode::Format, path + ": unsupported sample format");
      }
      have_data = true;
    }
    off = body + size + (size & 1);
  }
  require(have_data && rate > 0, ErrorCode::Format, path + ": missing fmt or data chunk");
  s.sample_rate = rate;
  return s;
}

// Writes mono IEEE float32.
inline void write_wav(const std::string& path, const SpeechInput& s) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  auto w32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto w16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const auto rate = static_cast<std::uint32_t>(std::lround(s.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(s.samples.size() * 4);
  out.write("RIFF", 4);
  w32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  w32(16);
  w16(3);
  w16(1);
  w32(rate);
  w32(rate * 4);
  w16(4);
  w16(32);
  out.write("data", 4);
  w32(data_bytes);
  for (double x : s.samples) {
    const float f = static_cast<float>(x);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  require(out.good(), ErrorCode::Io, "write failed for " + path);
}

// Transcript file: [{"token": "...", "start_s": 0.0, "end_s": 0.4}, ...]
inline std::vector<TimedToken> read_transcript(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  std::vector<TimedToken> out;
  try {
    const auto j = nlohmann::json::parse(in);
    require(j.is_array(), ErrorCode::Format, path + ": transcript must be a JSON array");
    for (const auto& t : j)
      out.push_back({t.at("token").get<std::string>(), t.at("start_s").get<double>(), t.at("end_s").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path + ": " + e.what());
  }
  return out;
}

inline void write_transcript(const std::string& path, const std::vector<TimedToken>& tokens) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : tokens) j.push_back({{"token", t.token}, {"start_s", t.start_s}, {"end_s", t.end_s}});
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace modmo
