#pragma once

#include <stdexcept>
#include <string>

namespace icat {

enum class ErrorCode {
  IoError,
  InvalidPageSize,
  RecordTooLarge,
  BadRecordId,
  CorruptBlock,
  EpochRegression,
  BadBlockNo,
  NotInUpdateSession,
  KeyExists,
  KeyNotFound,
  KeyTooLarge,
  CorruptData,
  ProofMismatch,
  UnknownSnapshot,
  SnapshotGap,
  NonSequentialAppend,
  SealQuorumFailed,
  VerifyQuorumFailed,
  VerifyMismatch,
  ListProofFailed,
  IntegrityViolation,
  RecoverQuorumFailed,
  RecoverTransferFailed,
  RecoverVerifyFailed,
  StaleToken,
  Unauthorized,
  NoReplica,
  OriginUnreachable,
  ProtocolError,
  ConfigError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

} // namespace icat
