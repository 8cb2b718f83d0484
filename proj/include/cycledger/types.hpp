#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cycledger {

using NodeId = std::uint32_t;
using CommitteeId = std::uint32_t;
using Round = std::uint32_t;
using Tick = std::int64_t;

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

enum class Role : std::uint8_t { Idle, Common, Leader, PartialSet, Referee };

std::string_view to_string(Role role);

// Error kinds raised across the library. Names follow the protocol contract
// so callers and the CLI can report them verbatim.
enum class Errc {
  UnknownNode,
  NoChannel,
  DuplicateSeq,
  BadDigest,
  StaleRound,
  NoQuorum,
  InvalidProof,
  CheatingLeader,
  InvalidWitness,
  InsufficientParticipants,
  BadTicket,
  ForgedCert,
  DimensionMismatch,
  BadCert,
  NoParticipants,
  BudgetExceeded,
  ConfigError,
  DomainError,
  InsufficientData,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cycledger
