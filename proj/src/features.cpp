// SPDX-License-Identifier: Apache-2.0
#include "promptdb/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace promptdb {

namespace {

constexpr int kMinSampleRate = 8000;
constexpr int kMaxSampleRate = 48000;

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void check_clip(const AudioClip& clip, double min_duration_s) {
  if (clip.sample_rate < kMinSampleRate || clip.sample_rate > kMaxSampleRate) {
    raise(ErrorCode::BadInput,
          "sample rate " + std::to_string(clip.sample_rate) + " outside 8000..48000");
  }
  if (clip.duration_s() < min_duration_s) {
    raise(ErrorCode::TooShort, "need at least " + std::to_string(min_duration_s) +
                                   " s of audio, got " + std::to_string(clip.duration_s()));
  }
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) raise(ErrorCode::IoFailure, "read failed for " + path);

  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    raise(ErrorCode::CorruptHeader, path + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* chunk = p + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    if (pos + 8 + size > n) {
      raise(ErrorCode::CorruptHeader, path + ": chunk extends past end of file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) raise(ErrorCode::CorruptHeader, path + ": fmt chunk too small");
      format = get_u16(chunk + 8);
      channels = get_u16(chunk + 10);
      sample_rate = get_u32(chunk + 12);
      bits = get_u16(chunk + 22);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos += 8 + size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) {
    raise(ErrorCode::CorruptHeader, path + ": missing fmt or data chunk");
  }
  if (format != 1 || bits != 16) {
    raise(ErrorCode::UnsupportedFormat,
          path + ": only PCM 16-bit is supported (format " + std::to_string(format) +
              ", " + std::to_string(bits) + " bits)");
  }
  if (channels != 1 && channels != 2) {
    raise(ErrorCode::UnsupportedFormat,
          path + ": " + std::to_string(channels) + " channels");
  }
  if (sample_rate < kMinSampleRate || sample_rate > kMaxSampleRate) {
    raise(ErrorCode::UnsupportedFormat,
          path + ": sample rate " + std::to_string(sample_rate));
  }
  const std::size_t frame_bytes = 2u * channels;
  if (data_size < frame_bytes) raise(ErrorCode::CorruptHeader, path + ": empty data chunk");

  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* s = data + i * frame_bytes;
    const std::int16_t a = static_cast<std::int16_t>(get_u16(s));
    if (channels == 1) {
      clip.samples[i] = static_cast<float>(a) / 32768.0f;
    } else {
      const std::int16_t b = static_cast<std::int16_t>(get_u16(s + 2));
      clip.samples[i] = (static_cast<float>(a) + static_cast<float>(b)) / 2.0f / 32768.0f;
    }
  }
  return clip;
}

void write_wav_pcm16(const std::string& path, const AudioClip& clip) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open " + path + " for writing");

  auto put_u32 = [&](std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
    out.write(b, 2);
  };

  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(static_cast<std::uint32_t>(clip.sample_rate * 2));
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_size);
  for (float s : clip.samples) {
    const float clamped = std::clamp(s, -1.0f, 1.0f);
    const int v = static_cast<int>(std::lrintf(clamped * 32767.0f));
    put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  out.flush();
  if (!out) raise(ErrorCode::IoFailure, "write failed for " + path);
}

std::optional<double> estimate_pitch_mean(const AudioClip& clip) {
  check_clip(clip, 0.2);
  const int sr = clip.sample_rate;
  const int frame = (sr * 40) / 1000;
  const int hop = (sr * 10) / 1000;
  const int lag_min = std::max(1, (sr + 399) / 400);  // ceil(sr / 400)
  const int lag_max = sr / 60;
  const int corr_n = frame - lag_max;  // fixed correlation window across lags
  if (corr_n <= 0) raise(ErrorCode::BadInput, "frame too short for the lag range");

  double sum_f0 = 0.0;
  std::size_t voiced = 0;
  std::vector<double> r(static_cast<std::size_t>(lag_max) + 1, 0.0);

  for (std::size_t start = 0; start + static_cast<std::size_t>(frame) <= clip.samples.size();
       start += static_cast<std::size_t>(hop)) {
    const float* x = clip.samples.data() + start;

    double e0 = 0.0;
    for (int t = 0; t < corr_n; ++t) e0 += static_cast<double>(x[t]) * x[t];
    if (e0 <= 0.0) continue;

    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double num = 0.0;
      double e1 = 0.0;
      for (int t = 0; t < corr_n; ++t) {
        num += static_cast<double>(x[t]) * x[t + lag];
        e1 += static_cast<double>(x[t + lag]) * x[t + lag];
      }
      const double den = std::sqrt(e0 * e1);
      r[lag] = den > 0.0 ? num / den : 0.0;
    }

    double r_max = 0.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) r_max = std::max(r_max, r[lag]);
    if (r_max < 0.5) continue;  // unvoiced

    // The fundamental is the shortest near-maximal local peak; longer lags at
    // period multiples score just as high for periodic signals.
    int best = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      const double left = lag > lag_min ? r[lag - 1] : -1.0;
      const double right = lag < lag_max ? r[lag + 1] : -1.0;
      if (r[lag] >= left && r[lag] >= right && r[lag] >= 0.98 * r_max) {
        best = lag;
        break;
      }
    }
    if (best == 0) continue;

    double refined = static_cast<double>(best);
    if (best > lag_min && best < lag_max) {
      const double a = r[best - 1], b = r[best], c = r[best + 1];
      const double den = a - 2.0 * b + c;
      if (den < 0.0) refined += 0.5 * (a - c) / den;
    }
    sum_f0 += static_cast<double>(sr) / refined;
    ++voiced;
  }

  if (voiced == 0) return std::nullopt;
  return sum_f0 / static_cast<double>(voiced);
}

double estimate_speech_rate(const AudioClip& clip) {
  check_clip(clip, 0.5);
  const int sr = clip.sample_rate;
  const std::size_t frame = static_cast<std::size_t>((sr * 20) / 1000);
  const std::size_t n_frames = clip.samples.size() / frame;
  if (n_frames == 0) raise(ErrorCode::TooShort, "no full energy frames");

  std::vector<double> rms(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    const float* x = clip.samples.data() + i * frame;
    for (std::size_t t = 0; t < frame; ++t) acc += static_cast<double>(x[t]) * x[t];
    rms[i] = std::sqrt(acc / static_cast<double>(frame));
  }

  // Centered moving average of width 5, clamped at the edges.
  std::vector<double> env(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(i + 2, n_frames - 1);
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) acc += rms[k];
    env[i] = acc / static_cast<double>(hi - lo + 1);
  }

  const double env_max = *std::max_element(env.begin(), env.end());
  if (env_max <= 0.0) return 0.0;  // silence

  struct Peak {
    std::size_t index;
    double value;
  };
  std::vector<Peak> candidates;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double left = i > 0 ? env[i - 1] : -1.0;
    const double right = i + 1 < n_frames ? env[i + 1] : -1.0;
    if (env[i] >= left && env[i] >= right && env[i] >= 0.5 * env_max) {
      candidates.push_back({i, env[i]});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.index < b.index;
  });

  constexpr std::size_t kMinSeparation = 5;  // 100 ms of 20 ms frames
  std::vector<std::size_t> accepted;
  for (const Peak& p : candidates) {
    bool ok = true;
    for (std::size_t a : accepted) {
      const std::size_t gap = p.index > a ? p.index - a : a - p.index;
      if (gap < kMinSeparation) {
        ok = false;
        break;
      }
    }
    if (ok) accepted.push_back(p.index);
  }

  return static_cast<double>(accepted.size()) / clip.duration_s();
}

QueryFeatures features_from_wav(const std::string& path) {
  const AudioClip clip = read_wav(path);
  QueryFeatures q;
  if (auto pitch = estimate_pitch_mean(clip)) q.pitch_mean_hz = *pitch;
  q.speaking_rate = estimate_speech_rate(clip);
  return q;
}

}  // namespace promptdb
