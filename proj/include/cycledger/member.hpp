#pragma once

#include <string>
#include <vector>

#include "cycledger/crypto.hpp"
#include "cycledger/types.hpp"

namespace cycledger {

// One <PK, address> entry of a committee member list.
struct MemberEntry {
  NodeId id = kNoNode;
  crypto::PublicKey pk;
  std::string address;

  auto operator<=>(const MemberEntry&) const = default;
};

// Entry plus the sortition output proving committee membership.
struct MemberCert {
  MemberEntry entry;
  crypto::VrfOutput vrf;

  auto operator<=>(const MemberCert&) const = default;
};

// Key-member assignment for one round, as published in the previous block.
struct KeyAssignment {
  std::vector<NodeId> referee;
  std::vector<NodeId> leaders;                    // leaders[k] leads committee k
  std::vector<std::vector<NodeId>> partial_sets;  // partial_sets[k], size lambda

  std::size_t committees() const { return leaders.size(); }
  bool operator==(const KeyAssignment&) const = default;
};

}  // namespace cycledger
