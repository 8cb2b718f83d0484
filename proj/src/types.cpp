#include "cycledger/types.hpp"

namespace cycledger {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Idle: return "idle";
    case Role::Common: return "common";
    case Role::Leader: return "leader";
    case Role::PartialSet: return "partial";
    case Role::Referee: return "referee";
  }
  return "?";
}

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::NoChannel: return "NoChannel";
    case Errc::DuplicateSeq: return "DuplicateSeq";
    case Errc::BadDigest: return "BadDigest";
    case Errc::StaleRound: return "StaleRound";
    case Errc::NoQuorum: return "NoQuorum";
    case Errc::InvalidProof: return "InvalidProof";
    case Errc::CheatingLeader: return "CheatingLeader";
    case Errc::InvalidWitness: return "InvalidWitness";
    case Errc::InsufficientParticipants: return "InsufficientParticipants";
    case Errc::BadTicket: return "BadTicket";
    case Errc::ForgedCert: return "ForgedCert";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::BadCert: return "BadCert";
    case Errc::NoParticipants: return "NoParticipants";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::ConfigError: return "ConfigError";
    case Errc::DomainError: return "DomainError";
    case Errc::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

}  // namespace cycledger
