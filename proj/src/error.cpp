#include "rboard/error.hpp"

namespace rboard {

std::string_view machine_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::SchemaViolation: return "schema_violation";
    case ErrorCode::EmptyDataset: return "empty_dataset";
    case ErrorCode::DegenerateClass: return "degenerate_class";
    case ErrorCode::SingleClass: return "single_class";
    case ErrorCode::EmptyInteractions: return "empty_interactions";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::EmptyRelevant: return "empty_relevant";
    case ErrorCode::MissingEntryFile: return "missing_entry_file";
    case ErrorCode::ArchiveTooLarge: return "archive_too_large";
    case ErrorCode::MalformedArchive: return "malformed_archive";
    case ErrorCode::NoDatasetsForTask: return "no_datasets_for_task";
    case ErrorCode::InvalidState: return "invalid_state";
    case ErrorCode::OutputInvalid: return "output_invalid";
    case ErrorCode::IncompleteRanks: return "incomplete_ranks";
    case ErrorCode::ImmutableRecord: return "immutable_record";
    case ErrorCode::IntegrityError: return "integrity_error";
    case ErrorCode::Unauthorized: return "unauthorized";
    case ErrorCode::Io: return "io_error";
  }
  return "unknown";
}

}  // namespace rboard
