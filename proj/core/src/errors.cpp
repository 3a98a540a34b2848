#include "icat/errors.hpp"

namespace icat {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidPageSize: return "InvalidPageSize";
    case ErrorCode::RecordTooLarge: return "RecordTooLarge";
    case ErrorCode::BadRecordId: return "BadRecordId";
    case ErrorCode::CorruptBlock: return "CorruptBlock";
    case ErrorCode::EpochRegression: return "EpochRegression";
    case ErrorCode::BadBlockNo: return "BadBlockNo";
    case ErrorCode::NotInUpdateSession: return "NotInUpdateSession";
    case ErrorCode::KeyExists: return "KeyExists";
    case ErrorCode::KeyNotFound: return "KeyNotFound";
    case ErrorCode::KeyTooLarge: return "KeyTooLarge";
    case ErrorCode::CorruptData: return "CorruptData";
    case ErrorCode::ProofMismatch: return "ProofMismatch";
    case ErrorCode::UnknownSnapshot: return "UnknownSnapshot";
    case ErrorCode::SnapshotGap: return "SnapshotGap";
    case ErrorCode::NonSequentialAppend: return "NonSequentialAppend";
    case ErrorCode::SealQuorumFailed: return "SealQuorumFailed";
    case ErrorCode::VerifyQuorumFailed: return "VerifyQuorumFailed";
    case ErrorCode::VerifyMismatch: return "VerifyMismatch";
    case ErrorCode::ListProofFailed: return "ListProofFailed";
    case ErrorCode::IntegrityViolation: return "IntegrityViolation";
    case ErrorCode::RecoverQuorumFailed: return "RecoverQuorumFailed";
    case ErrorCode::RecoverTransferFailed: return "RecoverTransferFailed";
    case ErrorCode::RecoverVerifyFailed: return "RecoverVerifyFailed";
    case ErrorCode::StaleToken: return "StaleToken";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::NoReplica: return "NoReplica";
    case ErrorCode::OriginUnreachable: return "OriginUnreachable";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

} // namespace icat
