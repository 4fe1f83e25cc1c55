// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "promptdb/snapshot.hpp"
#include "promptdb/types.hpp"

namespace promptdb {

/// Dense vectors for one record, read from the binary vector store (or
/// supplied inline for hand-authored manifests).
struct RecordVectors {
  Vec speaker;
  Vec emotion;
  std::optional<Vec> face;
};

/// Parses and validates one JSON Lines manifest object. Dense vectors come
/// either from `vectors` or, when that is nullopt, from inline
/// speaker_vec/emotion_vec/face_vec arrays in the line itself. Vectors within
/// [0.5, 2.0] of unit norm are re-normalized; others are rejected.
///
/// Raises MissingField, BadLanguageCode, DimensionMismatch, NormOutOfRange,
/// BadField.
PromptRecord parse_record(const std::string& line, const Dims& dims,
                          std::optional<RecordVectors> vectors = std::nullopt);

/// Serializes a record to one manifest line. Dense vectors are never written
/// to the manifest; set `inline_vectors` to include them (test fixtures).
std::string record_to_manifest_line(const PromptRecord& record,
                                    bool inline_vectors = false);

/// Reads a manifest/vector-store pair written by save_store. The two files
/// must agree on record count and dims. Raises HeaderMismatch,
/// TruncatedStore, IoFailure plus parse_record errors.
DatabaseSnapshot open_store(const std::string& manifest_path,
                            const std::string& vectors_path);

/// Writes the snapshot as a manifest (no dense vectors) plus the binary
/// vector store: header {magic "M3PV", version u16, count u32, D_s u16,
/// D_e u16, D_f u16}, then per record speaker_vec, emotion_vec, a
/// face-present flag byte and the optional face_vec, all floats
/// little-endian f32.
void save_store(const DatabaseSnapshot& snapshot,
                const std::string& manifest_path,
                const std::string& vectors_path);

/// Builds a snapshot from a manifest whose lines carry inline dense vectors.
/// Dims are taken from the first record.
DatabaseSnapshot ingest_inline_manifest(const std::string& manifest_path);

}  // namespace promptdb
