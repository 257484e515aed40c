#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rboard {

// Every failure the platform reports carries one of these codes. The machine
// strings returned by machine_code() are part of the public API and must not
// change between releases.
enum class ErrorCode {
  InvalidArgument,
  NotFound,
  DuplicateId,
  SchemaViolation,
  EmptyDataset,
  DegenerateClass,
  SingleClass,
  EmptyInteractions,
  EmptyInput,
  EmptyRelevant,
  MissingEntryFile,
  ArchiveTooLarge,
  MalformedArchive,
  NoDatasetsForTask,
  InvalidState,
  OutputInvalid,
  IncompleteRanks,
  ImmutableRecord,
  IntegrityError,
  Unauthorized,
  Io,
};

std::string_view machine_code(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rboard
