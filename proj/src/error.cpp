#include "ettag/error.hpp"

namespace ettag {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidName: return "InvalidName";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::EmptyCatalog: return "EmptyCatalog";
    case ErrorKind::OutputOOV: return "OutputOOV";
    case ErrorKind::DisallowedToken: return "DisallowedToken";
    case ErrorKind::ScorerContractViolation: return "ScorerContractViolation";
    case ErrorKind::NoFinishedHypothesis: return "NoFinishedHypothesis";
    case ErrorKind::UnknownEntity: return "UnknownEntity";
    case ErrorKind::MissingMentionOrder: return "MissingMentionOrder";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::DanglingIMention: return "DanglingIMention";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::TitleNotInCatalog: return "TitleNotInCatalog";
    case ErrorKind::CacheMismatch: return "CacheMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

bool is_contract_violation(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OutputOOV:
    case ErrorKind::DisallowedToken:
    case ErrorKind::ScorerContractViolation:
      return true;
    default:
      return false;
  }
}

}  // namespace ettag
