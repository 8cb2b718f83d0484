#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "cycledger/types.hpp"

namespace cycledger::reputation {

// Vote entries: +1 Yes, -1 No, 0 Unknown.
using VoteVector = std::vector<std::int8_t>;
// Decision entries are +1 (in TXdecSET) or -1.
using DecisionVector = std::vector<std::int8_t>;

// Cosine similarity between a vote and the decision. An all-Unknown vote
// scores 0.
double score(std::span<const std::int8_t> vote, std::span<const std::int8_t> decision);

// u_k = +1 iff yes_counts[k] > committee_size / 2.
DecisionVector decision_vector(std::span<const std::uint32_t> yes_counts,
                               std::uint32_t committee_size);

using ReputationTable = std::map<NodeId, double>;

struct ScoreEntry {
  NodeId node = kNoNode;
  double score = 0.0;
};

// Adds each listed score. `certified` is the caller's verdict on the list's
// consensus certificate; an uncertified list raises BadCert and leaves the
// table untouched.
void update_reputation(ReputationTable& table, std::span<const ScoreEntry> scores,
                       bool certified);

// g(w) = e^w for w <= 0, 1 + ln(w + 1) otherwise.
double map_reputation(double w);

// reward_i = total_fees * g(w_i) / sum_j g(w_j). Participants missing from
// the table count as w = 0.
std::map<NodeId, double> distribute_rewards(double total_fees, const ReputationTable& table,
                                            std::span<const NodeId> participants);

// Cube-root punishment for a leader confirmed faulty. Sub-unity reputations
// drop to 0 so the penalty never increases the value.
double punish_leader(double w);

}  // namespace cycledger::reputation
