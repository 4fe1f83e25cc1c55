// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptdb/types.hpp"

namespace promptdb {

/// Two tercile cut points over a snapshot distribution; value <= first is the
/// low band, <= second the middle band, above it the high band.
using TercileCuts = std::array<double, 2>;

struct TransparentStringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept {
    return std::hash<std::string_view>{}(s);
  }
};

/// Immutable, id-indexed build of the prompt database. All queries run
/// against one snapshot; replacing it is an atomic swap at the service layer.
struct DatabaseSnapshot {
  std::vector<PromptRecord> records;  // sorted by id
  Dims dims;
  std::map<std::string, int> vocab;  // desc_vec term -> column index
  std::int64_t created_at_unix = 0;

  // Derived at build time.
  std::map<std::string, double> idf;        // 1 + ln(N / df)
  std::vector<double> desc_tfidf_norm;      // per record, in record order
  std::optional<TercileCuts> rate_cuts;     // absent when no rates present
  std::optional<TercileCuts> pitch_cuts;
  std::unordered_map<std::string, std::size_t, TransparentStringHash, std::equal_to<>>
      id_index;

  std::size_t size() const { return records.size(); }

  /// Index of a record by id, or nullopt.
  std::optional<std::size_t> index_of(std::string_view id) const;

  /// Record by id; raises BadInput when absent.
  const PromptRecord& at(std::string_view id) const;
};

/// Builds a snapshot: records sorted by id, duplicate ids rejected, vocab is
/// the union of desc_vec terms, dims taken from the records (which must all
/// agree). Raises DuplicateId, EmptyDatabase, DimensionMismatch.
DatabaseSnapshot build_snapshot(std::vector<PromptRecord> records);

/// Data-level equality (records, dims, vocab); created_at is excluded since
/// the store format carries no timestamp.
bool snapshots_equal(const DatabaseSnapshot& a, const DatabaseSnapshot& b);

/// Lowercased alphanumeric token runs; shared by description ingestion and
/// text registration.
std::vector<std::string> tokenize_text(std::string_view text);

/// 0 = low, 1 = middle, 2 = high.
int tercile_band(double value, const TercileCuts& cuts);

}  // namespace promptdb
