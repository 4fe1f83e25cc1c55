// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace promptdb {

/// Typed failure categories shared across the library. Each operation
/// documents which codes it can raise; the CLI maps all of them to exit 2.
enum class ErrorCode {
  MissingField,
  BadLanguageCode,
  DimensionMismatch,
  NormOutOfRange,
  BadField,
  DuplicateId,
  EmptyDatabase,
  HeaderMismatch,
  TruncatedStore,
  IoFailure,
  ZeroVector,
  NonpositiveReference,
  EmptyReference,
  BadThreshold,
  UnsupportedFormat,
  CorruptHeader,
  TooShort,
  NoModalities,
  NoOutputs,
  UnweightedAgent,
  OutOfRange,
  NothingToDescribe,
  UnknownLanguage,
  NoCandidates,
  OracleFailure,
  NoProxyRecords,
  BadInput,
  BadQuery,
  NoFaceVectors,
  EmptySubset,
  MissingQueryFeature,
  UnmeasuredStage,
  BadSpec,
  BadRequest,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace promptdb
