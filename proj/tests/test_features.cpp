// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "promptdb/features.hpp"
#include "test_util.hpp"

using namespace promptdb;

namespace {

AudioClip sine(double freq_hz, double duration_s, int sr, float amplitude = 0.5f) {
  AudioClip clip;
  clip.sample_rate = sr;
  const std::size_t n = static_cast<std::size_t>(duration_s * sr);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] =
        amplitude * static_cast<float>(std::sin(2.0 * M_PI * freq_hz * i / sr));
  }
  return clip;
}

/// k bursts per second: 100 ms tone bursts evenly spaced, silence between.
AudioClip pulse_train(int bursts_per_s, double duration_s, int sr,
                      float amplitude = 0.5f) {
  AudioClip clip;
  clip.sample_rate = sr;
  const std::size_t n = static_cast<std::size_t>(duration_s * sr);
  clip.samples.assign(n, 0.0f);
  const double period = 1.0 / bursts_per_s;
  const std::size_t burst_len = static_cast<std::size_t>(0.1 * sr);
  for (double t = 0.05; t + 0.1 < duration_s + 1e-9; t += period) {
    const std::size_t start = static_cast<std::size_t>(t * sr);
    for (std::size_t i = 0; i < burst_len && start + i < n; ++i) {
      clip.samples[start + i] =
          amplitude * static_cast<float>(std::sin(2.0 * M_PI * 400.0 * i / sr));
    }
  }
  return clip;
}

AudioClip white_noise(double duration_s, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(-0.5f, 0.5f);
  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.resize(static_cast<std::size_t>(duration_s * sr));
  for (auto& s : clip.samples) s = uni(rng);
  return clip;
}

}  // namespace

TEST_CASE("pitch estimate on pure sines, within 5 Hz") {
  for (double f : {80.0, 100.0, 120.0, 220.0, 330.0}) {
    const auto est = estimate_pitch_mean(sine(f, 1.0, 16000));
    REQUIRE(est.has_value());
    CHECK(std::abs(*est - f) < 5.0);
  }
}

TEST_CASE("pitch estimate is amplitude invariant") {
  const auto full = estimate_pitch_mean(sine(220.0, 1.0, 16000, 0.8f));
  const auto half = estimate_pitch_mean(sine(220.0, 1.0, 16000, 0.4f));
  REQUIRE(full.has_value());
  REQUIRE(half.has_value());
  CHECK(std::abs(*full - *half) / *full < 0.01);
}

TEST_CASE("white noise has no voiced frames") {
  CHECK_FALSE(estimate_pitch_mean(white_noise(1.0, 16000, 4)).has_value());
}

TEST_CASE("pitch estimate rejects too-short clips") {
  CHECK_THROWS_AS(estimate_pitch_mean(sine(220.0, 0.1, 16000)), Error);
}

TEST_CASE("speech rate on synthetic pulse trains, within 0.5") {
  CHECK(std::abs(estimate_speech_rate(pulse_train(4, 1.0, 16000)) - 4.0) <= 0.5);
  CHECK(std::abs(estimate_speech_rate(pulse_train(4, 2.0, 16000)) - 4.0) <= 0.5);
  for (int k : {2, 3, 5}) {
    CHECK(std::abs(estimate_speech_rate(pulse_train(k, 2.0, 16000)) - k) <= 0.5);
  }
}

TEST_CASE("speech rate is zero on silence and amplitude invariant") {
  AudioClip silence;
  silence.sample_rate = 16000;
  silence.samples.assign(16000, 0.0f);
  CHECK(estimate_speech_rate(silence) == 0.0);

  const double full = estimate_speech_rate(pulse_train(3, 2.0, 16000, 0.8f));
  const double half = estimate_speech_rate(pulse_train(3, 2.0, 16000, 0.4f));
  CHECK(std::abs(full - half) <= 0.01 * full);

  CHECK_THROWS_AS(estimate_speech_rate(pulse_train(2, 0.3, 16000)), Error);
}

TEST_CASE("wav round trip: zeros, sine, stereo cancellation") {
  const auto dir = testutil::temp_dir("wav");

  AudioClip zeros;
  zeros.sample_rate = 16000;
  zeros.samples.assign(16000, 0.0f);
  const std::string zpath = (dir / "zeros.wav").string();
  write_wav_pcm16(zpath, zeros);
  const AudioClip zread = read_wav(zpath);
  CHECK(zread.sample_rate == 16000);
  CHECK(zread.samples.size() == 16000);
  for (float s : zread.samples) CHECK(s == 0.0f);

  const AudioClip tone = sine(220.0, 0.5, 16000);
  const std::string tpath = (dir / "tone.wav").string();
  write_wav_pcm16(tpath, tone);
  const AudioClip tread = read_wav(tpath);
  REQUIRE(tread.samples.size() == tone.samples.size());
  for (std::size_t i = 0; i < tone.samples.size(); ++i) {
    CHECK(std::abs(tread.samples[i] - tone.samples[i]) < 2.0f / 32768.0f);
  }

  // Hand-built stereo file with channels x and -x averages to silence.
  {
    const std::string spath = (dir / "stereo.wav").string();
    std::ofstream out(spath, std::ios::binary);
    auto put_u32 = [&](std::uint32_t v) {
      char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                   static_cast<char>((v >> 16) & 0xFF),
                   static_cast<char>((v >> 24) & 0xFF)};
      out.write(b, 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
      char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
      out.write(b, 2);
    };
    const std::uint32_t frames = 8000;
    out.write("RIFF", 4);
    put_u32(36 + frames * 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);
    put_u16(2);
    put_u32(16000);
    put_u32(16000 * 4);
    put_u16(4);
    put_u16(16);
    out.write("data", 4);
    put_u32(frames * 4);
    for (std::uint32_t i = 0; i < frames; ++i) {
      const std::int16_t x = static_cast<std::int16_t>(
          12000 * std::sin(2.0 * M_PI * 220.0 * i / 16000.0));
      put_u16(static_cast<std::uint16_t>(x));
      put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(-x)));
    }
    out.close();
    const AudioClip sread = read_wav(spath);
    CHECK(sread.samples.size() == frames);
    for (float s : sread.samples) CHECK(std::abs(s) <= 1.0f / 32768.0f);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("wav reader rejects float encoding and corrupt headers") {
  const auto dir = testutil::temp_dir("wav_bad");

  const std::string fpath = (dir / "float.wav").string();
  {
    AudioClip tone = sine(220.0, 0.5, 16000);
    write_wav_pcm16(fpath, tone);
    // Patch the format tag to 3 (IEEE float).
    std::fstream f(fpath, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(20);
    const char three[2] = {3, 0};
    f.write(three, 2);
  }
  try {
    read_wav(fpath);
    FAIL("expected UnsupportedFormat");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedFormat);
  }

  const std::string gpath = (dir / "garbage.wav").string();
  {
    std::ofstream out(gpath, std::ios::binary);
    out << "this is not a wav file";
  }
  try {
    read_wav(gpath);
    FAIL("expected CorruptHeader");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptHeader);
  }

  CHECK_THROWS_AS(read_wav((dir / "does_not_exist.wav").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("features_from_wav extracts rate and pitch") {
  const auto dir = testutil::temp_dir("wav_feat");
  const std::string path = (dir / "tone.wav").string();
  write_wav_pcm16(path, sine(220.0, 1.0, 16000));
  const QueryFeatures q = features_from_wav(path);
  REQUIRE(q.pitch_mean_hz.has_value());
  CHECK(std::abs(*q.pitch_mean_hz - 220.0) < 5.0);
  CHECK(q.speaking_rate.has_value());
  CHECK_FALSE(q.speaker_vec.has_value());
  std::filesystem::remove_all(dir);
}
