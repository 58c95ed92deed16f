#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ettag {

enum class ErrorKind {
  InvalidName,
  DuplicateName,
  Io,
  EmptyCatalog,
  OutputOOV,
  DisallowedToken,
  ScorerContractViolation,
  NoFinishedHypothesis,
  UnknownEntity,
  MissingMentionOrder,
  EmptyDataset,
  MalformedLine,
  DanglingIMention,
  SchemaError,
  TitleNotInCatalog,
  CacheMismatch,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Errors that indicate a broken internal contract rather than bad input.
/// The CLI maps these to exit code 2.
bool is_contract_violation(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ettag
