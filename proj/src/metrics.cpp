// SPDX-License-Identifier: Apache-2.0
#include "promptdb/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "promptdb/types.hpp"

namespace promptdb {

void ProbVector::validate() const {
  double sum = 0.0;
  for (const auto& [lang, p] : entries) {
    if (!is_language_code(lang)) {
      raise(ErrorCode::BadLanguageCode, "probability key '" + lang + "'");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
      raise(ErrorCode::BadField, "probability for '" + lang + "' outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    raise(ErrorCode::BadField,
          "probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

double srs(double speed_test, double speed_ref) {
  if (speed_ref <= 0.0) {
    raise(ErrorCode::NonpositiveReference,
          "reference speaking rate must be > 0");
  }
  if (speed_test < 0.0) {
    raise(ErrorCode::BadInput, "test speaking rate must be >= 0");
  }
  return std::abs((speed_test - speed_ref) / speed_ref);
}

double pitch_similarity(double pitch_test_hz, double pitch_ref_hz) {
  if (pitch_ref_hz <= 0.0) {
    raise(ErrorCode::NonpositiveReference, "reference pitch must be > 0");
  }
  return std::abs((pitch_test_hz - pitch_ref_hz) / pitch_ref_hz);
}

bool passes_lid(const ProbVector& p, const std::string& lang, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    raise(ErrorCode::BadThreshold, "LID threshold must be in (0, 1)");
  }
  return p.probability_of(lang) > threshold;
}

namespace {

// Decodes UTF-8; invalid bytes fall through as single codepoints so
// normalization is total over arbitrary input.
std::vector<char32_t> decode_utf8(const std::string& text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    char32_t cp = c;
    std::size_t extra = 0;
    if (c >= 0xF0) {
      cp = c & 0x07u;
      extra = 3;
    } else if (c >= 0xE0) {
      cp = c & 0x0Fu;
      extra = 2;
    } else if (c >= 0xC0) {
      cp = c & 0x1Fu;
      extra = 1;
    }
    if (extra > 0 && i + extra < text.size()) {
      bool ok = true;
      for (std::size_t k = 1; k <= extra; ++k) {
        const unsigned char cc = static_cast<unsigned char>(text[i + k]);
        if ((cc & 0xC0u) != 0x80u) {
          ok = false;
          break;
        }
        cp = (cp << 6) | (cc & 0x3Fu);
      }
      if (ok) {
        i += extra + 1;
        out.push_back(cp);
        continue;
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

char32_t lowercase(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  // Latin-1 supplement letters, excluding the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  return cp;
}

bool is_space(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' ||
         cp == U'\f' || cp == U'\v' || cp == 0xA0 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F || cp == 0x3000;
}

// Punctuation by explicit ranges: ASCII punctuation plus the common Unicode
// punctuation blocks (general, CJK, fullwidth forms).
bool is_punct(char32_t cp) {
  if ((cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
      (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E)) {
    return true;
  }
  if (cp >= 0xA1 && cp <= 0xBF && cp != 0xAA && cp != 0xBA) return true;
  if (cp >= 0x2010 && cp <= 0x2027) return true;
  if (cp >= 0x2030 && cp <= 0x205E) return true;
  if (cp >= 0x3001 && cp <= 0x303F) return true;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;
  return false;
}

}  // namespace

std::vector<char32_t> normalize_for_cer(const std::string& text) {
  const std::vector<char32_t> decoded = decode_utf8(text);
  std::vector<char32_t> out;
  out.reserve(decoded.size());
  bool pending_space = false;
  for (char32_t cp : decoded) {
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (is_punct(cp)) continue;
    if (pending_space) {
      out.push_back(U' ');
      pending_space = false;
    }
    out.push_back(lowercase(cp));
  }
  return out;
}

std::size_t edit_distance(const std::vector<char32_t>& a,
                          const std::vector<char32_t>& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double cer(const std::string& reference, const std::string& hypothesis) {
  const std::vector<char32_t> ref = normalize_for_cer(reference);
  const std::vector<char32_t> hyp = normalize_for_cer(hypothesis);
  if (ref.empty()) {
    raise(ErrorCode::EmptyReference, "reference is empty after normalization");
  }
  return static_cast<double>(edit_distance(ref, hyp)) /
         static_cast<double>(ref.size());
}

}  // namespace promptdb
