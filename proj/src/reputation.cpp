#include "cycledger/reputation.hpp"

#include <cmath>
#include <string>

namespace cycledger::reputation {

double score(std::span<const std::int8_t> vote, std::span<const std::int8_t> decision) {
  if (vote.size() != decision.size() || vote.empty())
    throw Error(Errc::DimensionMismatch, "vote dimension " + std::to_string(vote.size()) +
                                             " vs decision " + std::to_string(decision.size()));
  double dot = 0.0, vv = 0.0, uu = 0.0;
  for (std::size_t k = 0; k < vote.size(); ++k) {
    dot += static_cast<double>(vote[k]) * decision[k];
    vv += static_cast<double>(vote[k]) * vote[k];
    uu += static_cast<double>(decision[k]) * decision[k];
  }
  if (vv == 0.0 || uu == 0.0) return 0.0;
  double s = dot / (std::sqrt(vv) * std::sqrt(uu));
  return std::fmax(-1.0, std::fmin(1.0, s));
}

DecisionVector decision_vector(std::span<const std::uint32_t> yes_counts,
                               std::uint32_t committee_size) {
  DecisionVector u;
  u.reserve(yes_counts.size());
  for (auto yes : yes_counts) u.push_back(2 * yes > committee_size ? 1 : -1);
  return u;
}

void update_reputation(ReputationTable& table, std::span<const ScoreEntry> scores,
                       bool certified) {
  if (!certified) throw Error(Errc::BadCert, "score list lacks a valid certificate");
  for (const auto& e : scores) table[e.node] += e.score;
}

double map_reputation(double w) { return w <= 0.0 ? std::exp(w) : 1.0 + std::log1p(w); }

std::map<NodeId, double> distribute_rewards(double total_fees, const ReputationTable& table,
                                            std::span<const NodeId> participants) {
  if (participants.empty()) throw Error(Errc::NoParticipants, "no participants to reward");
  if (total_fees < 0.0) throw Error(Errc::DomainError, "negative fee total");
  std::map<NodeId, double> mapped;
  double sum = 0.0;
  for (NodeId id : participants) {
    auto it = table.find(id);
    double g = map_reputation(it == table.end() ? 0.0 : it->second);
    mapped[id] = g;
  }
  for (const auto& [_, g] : mapped) sum += g;
  std::map<NodeId, double> rewards;
  for (const auto& [id, g] : mapped) rewards[id] = total_fees * (g / sum);
  return rewards;
}

double punish_leader(double w) { return w >= 1.0 ? std::cbrt(w) : 0.0; }

}  // namespace cycledger::reputation
