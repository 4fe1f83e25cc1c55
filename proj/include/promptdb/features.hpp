// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "promptdb/types.hpp"

namespace promptdb {

struct AudioClip {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 0;         // 8000..48000

  double duration_s() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

/// Reads a RIFF/WAVE file, PCM 16-bit, mono or stereo (stereo is averaged to
/// mono). Samples are scaled by 1/32768. Raises UnsupportedFormat,
/// CorruptHeader, IoFailure.
AudioClip read_wav(const std::string& path);

/// Writes a mono PCM16 WAV file (tooling and test fixtures).
void write_wav_pcm16(const std::string& path, const AudioClip& clip);

/// Mean fundamental frequency over voiced frames. Frame-wise normalized
/// autocorrelation, 40 ms frames, 10 ms hop, 60-400 Hz search range; a frame
/// is voiced when the peak normalized autocorrelation is >= 0.5. Returns
/// nullopt when no frame is voiced. Requires >= 0.2 s of audio (TooShort).
std::optional<double> estimate_pitch_mean(const AudioClip& clip);

/// Syllable-rate proxy: peaks in the smoothed energy envelope (20 ms RMS
/// frames, moving average of width 5, peak = local max >= 0.5 * envelope max
/// with >= 100 ms separation) divided by the clip duration. Requires
/// >= 0.5 s of audio (TooShort).
double estimate_speech_rate(const AudioClip& clip);

/// Speaking rate and mean pitch extracted from a WAV file, for query-side
/// use. Embedding fields stay empty; those arrive precomputed.
QueryFeatures features_from_wav(const std::string& path);

}  // namespace promptdb
