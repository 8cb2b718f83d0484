#pragma once

// Internal to the simulator: per-node protocol state and the event loop.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "cycledger/adversary.hpp"
#include "cycledger/committee.hpp"
#include "cycledger/consensus.hpp"
#include "cycledger/messages.hpp"
#include "cycledger/network.hpp"
#include "cycledger/simulation.hpp"
#include "cycledger/workload.hpp"

namespace cycledger::sim {

using consensus::Roster;
using net::MessagePtr;

// Offsets from the round start.
struct Schedule {
  Tick config_close = 0;
  Tick commit = 0;
  Tick claim_deadline = 0;
  Tick intra = 0;
  Tick window = 0;    // vote collection and consensus timeout
  Tick fallback = 0;  // cross-shard relay by the partial set
  Tick beacon_reveal = 0;
  Tick beacon_propose = 0;
  Tick block = 0;
};

struct SlotKey {
  CommitteeId committee = 0;
  std::uint32_t version = 0;
  auto operator<=>(const SlotKey&) const = default;
};

// Referee bookkeeping for one (committee, version).
struct RefSlot {
  std::shared_ptr<const CommitmentClaim> claim;  // first claim received
  std::optional<std::string> defect;
  std::optional<ImpeachMsg> impeach;
  std::uint32_t attempt = 0;
  std::set<std::uint32_t> proposed;  // attempts this node proposed in
  bool deadline_passed = false;
  bool commit_locked = false;
  bool expel_locked = false;
  std::shared_ptr<const CommitmentClaim> locked;
};

// Leader-side state of one transaction list.
struct Pipeline {
  std::uint64_t list_id = 0;
  ListKind kind = ListKind::Intra;
  CommitteeId source = 0;
  std::shared_ptr<const std::vector<ledger::Transaction>> txs;
  std::shared_ptr<const CrossListMsg> evidence;
  std::map<NodeId, VoteRecord> votes;
  bool proposed = false;
  bool decided = false;
  PayloadPtr decision;
  CertifiedPayload certified;
};

struct NodeState {
  NodeId id = kNoNode;
  crypto::KeyPair keys;
  std::unique_ptr<consensus::Engine> engine;
  Rng rng{0};
  adversary::StrategyPtr strategy;  // null when honest

  Role role = Role::Idle;
  CommitteeId committee = 0;  // valid for Common, Leader and PartialSet
  std::optional<committee::Sortition> sortition;

  // Leadership as this node currently believes it.
  std::vector<NodeId> leader_of;
  std::vector<std::uint32_t> version_of;
  std::set<NodeId> evicted;
  std::map<SlotKey, std::map<NodeId, NodeId>> new_votes;  // slot -> referee -> leader

  // Committee configuration: members known with proofs.
  std::map<crypto::PublicKey, MemberCert> view;
  std::set<NodeId> greeted;
  bool config_closed = false;

  // Partial member.
  std::vector<KeyListAckMsg> acks;
  std::map<std::uint32_t, std::shared_ptr<const CommitmentClaim>> held_claims;
  std::set<Digest> accused;  // witness digests already pursued
  std::map<Digest, std::pair<WitnessPtr, std::map<NodeId, ImpeachVote>>> impeach;
  std::set<Digest> impeach_sent;
  std::set<Digest> voted;
  bool framed = false;

  // Leader.
  std::uint32_t leading_version = 0;
  bool leading = false;
  std::shared_ptr<const CommitmentClaim> my_claim;
  std::uint64_t next_list = 1;
  std::map<std::uint64_t, Pipeline> pipelines;
  std::map<consensus::InstanceKey, std::uint64_t> instance_list;
  std::set<std::pair<CommitteeId, Digest>> cross_handled;
  std::vector<std::shared_ptr<const CrossListMsg>> cross_deferred;

  // Any key member: referee attestations and accepted commitments.
  std::map<SlotKey, std::vector<RefereeAttestation>> atts;
  std::map<CommitteeId, std::pair<std::uint32_t, Digest>> accepted;

  // Committee member.
  std::map<std::uint64_t, TxListMsg> lists;
  std::map<Digest, PayloadPtr> decisions;  // certified-for-me decision payloads by digest
  std::set<std::pair<CommitteeId, Digest>> cross_seen;  // (source, decision digest) lists seen

  // Referee.
  std::map<SlotKey, RefSlot> slots;
  std::map<Digest, ReportMsg> reports;
  std::map<NodeId, RegisterMsg> registrations;
  Digest contribution;
  std::map<NodeId, Digest> beacon_commits;
  std::map<NodeId, Digest> reveals;
  std::optional<Digest> beacon;
  std::uint32_t beacon_attempt = 0;
  std::uint32_t block_attempt = 0;
  bool block_locked = false;
  std::set<Digest> handoffs_forwarded;

  // Block acceptance.
  std::map<Digest, std::set<NodeId>> block_votes;
  std::map<Digest, PayloadPtr> block_payloads;
  bool block_accepted = false;
  Digest accepted_block;
  bool handoff_started = false;
  bool block_forwarded = false;

  bool corrupted() const { return strategy != nullptr; }
  bool is_key() const { return role == Role::Leader || role == Role::PartialSet; }
  bool in_committee() const { return role == Role::Common || is_key(); }
};

class World {
 public:
  World(const RunConfig& cfg, std::ostream* trace);
  RunResult run();

 private:
  // ---- setup and loop (core.cpp)
  void genesis();
  void setup_round(Round r);
  void start_round();
  void finish_round();
  void deliver(const net::Envelope& env);
  void count(const net::Envelope& env);
  MetricRole metric_role(NodeId id) const;

  // ---- messaging helpers (core.cpp)
  void send(NodeState& from, NodeId to, Message msg);
  void send_ptr(NodeState& from, NodeId to, const MessagePtr& msg);
  void multicast(NodeState& from, const std::vector<NodeId>& to, Message msg);
  void timer(NodeState& node, Tick offset, TimerMsg t);
  Tick now() const { return net_->now(); }
  Tick t0() const { return round_start_; }
  NodeState& node(NodeId id) { return nodes_[id]; }

  // ---- consensus hosting (core.cpp)
  Roster roster_for(const NodeState& n, Topic topic) const;
  consensus::InstanceKey cs_propose(NodeState& n, Topic topic, PayloadBody body);
  void cs_on_propose(NodeState& n, const consensus::ProposeMsg& m);
  void cs_on_echo(NodeState& n, const consensus::EchoMsg& m);
  void cs_on_confirm(NodeState& n, const consensus::ConfirmMsg& m);
  void cs_output(NodeState& n, const Roster& roster, consensus::Engine::Output out,
                 const consensus::InstanceKey& key);
  bool cs_acceptable(NodeState& n, const consensus::ProposeMsg& m);
  void cs_result(NodeState& n, const consensus::ConsensusResult& r);
  void cs_locked(NodeState& n, const consensus::InstanceKey& key, const Digest& digest);
  void cs_timeout(NodeState& n, const consensus::InstanceKey& key);

  // ---- views shared by handlers (core.cpp)
  committee::JudgeContext judge(const NodeState& n, CommitteeId k) const;
  std::vector<NodeId> key_members_of(CommitteeId k) const;
  std::vector<NodeId> all_key_members() const;
  const std::vector<NodeId>& referee() const { return assignment_.referee; }
  Roster committee_roster(const NodeState& n) const;
  std::vector<NodeId> committee_targets(const NodeState& n) const;
  MemberEntry entry_of(NodeId id) const;
  bool registered(NodeId id) const { return participants_.contains(id); }

  // ---- configuration and commitment (configuration.cpp)
  void on_config(NodeState& n, NodeId from, const ConfigMsg& m);
  void on_mem_list(NodeState& n, NodeId from, const MemListMsg& m);
  void on_member(NodeState& n, NodeId from, const MemberMsg& m);
  void send_key_list(NodeState& n);
  void on_key_list(NodeState& n, NodeId from, const KeyListMsg& m);
  void on_key_list_ack(NodeState& n, NodeId from, const KeyListAckMsg& m);
  void leader_commit(NodeState& n);
  void on_claim(NodeState& n, NodeId from, const ClaimMsg& m);
  void referee_try_propose(NodeState& n, const SlotKey& slot);
  void arm_slot_fallback(NodeState& n, const SlotKey& key);
  void referee_slot_timer(NodeState& n, const SlotKey& slot, std::uint32_t attempt);
  void on_attestation(NodeState& n, const AttestationMsg& m);
  void partial_audit(NodeState& n, std::uint32_t version);
  void raise_witness(NodeState& n, const Witness& w);
  void start_impeachment(NodeState& n, WitnessPtr w, bool checked = true);
  void on_accuse(NodeState& n, NodeId from, const AccuseMsg& m);
  void on_witness_forward(NodeState& n, const WitnessForwardMsg& m);
  void on_impeach_vote(NodeState& n, const ImpeachVoteMsg& m);
  void on_impeach(NodeState& n, const ImpeachMsg& m);
  void on_new_leader(NodeState& n, const NewLeaderMsg& m);
  void adopt_leader(NodeState& n, CommitteeId k, std::uint32_t version, NodeId leader);
  void frame(NodeState& n);
  bool referee_claim_ok(const NodeState& n, const CommitmentClaim& c) const;
  bool expel_acceptable(NodeState& n, const ExpelBody& b);
  void on_expel_locked(NodeState& n, const ExpelBody& b);

  // ---- transactions (transactions.cpp)
  void leader_start_intra(NodeState& n);
  void start_list(NodeState& n, ListKind kind, CommitteeId source,
                  std::vector<ledger::Transaction> txs, std::shared_ptr<const CrossListMsg> ev);
  void on_tx_list(NodeState& n, NodeId from, const TxListMsg& m);
  void on_vote(NodeState& n, const VoteMsg& m);
  void leader_close_votes(NodeState& n, std::uint64_t list_id);
  bool decision_acceptable(NodeState& n, const consensus::ProposeMsg& m, const DecisionBody& b);
  bool scores_acceptable(NodeState& n, const ScoreBody& b);
  void on_decision(NodeState& n, Pipeline& p, const consensus::ConsensusResult& r);
  void send_cross(NodeState& n, const Pipeline& p);
  void on_cross(NodeState& n, NodeId from, const CrossMsg& m);
  void process_cross(NodeState& n, const std::shared_ptr<const CrossListMsg>& cross);
  void cross_fallback(NodeState& n, const std::shared_ptr<const CrossListMsg>& cross);
  std::optional<std::vector<RefereeAttestation>> attestations_for(const NodeState& n,
                                                                  CommitteeId k) const;
  bool cross_evidence_ok(const NodeState& n, const CrossListMsg& cross,
                         const std::vector<RefereeAttestation>& atts) const;
  void on_cross_result(NodeState& n, const CrossResultMsg& m);

  // ---- referee, block and handoff (referee.cpp)
  void on_register(NodeState& n, NodeId from, const RegisterMsg& m);
  void on_report(NodeState& n, NodeId from, const ReportMsg& m);
  void beacon_commit(NodeState& n);
  void beacon_reveal(NodeState& n);
  void beacon_propose(NodeState& n);
  bool beacon_acceptable(NodeState& n, const BeaconBody& b);
  void block_propose(NodeState& n);
  std::optional<ledger::Block> build_block(NodeState& n,
                                          std::map<NodeId, double>* scores_out = nullptr);
  void on_block_locked(NodeState& n, const consensus::InstanceKey& key, const Digest& digest);
  void on_block(NodeState& n, NodeId from, const BlockMsg& m);
  void accept_block(NodeState& n, const PayloadPtr& payload);
  void start_handoff(NodeState& n);
  bool handoff_acceptable(NodeState& n, const HandoffBody& b);
  void on_handoff(NodeState& n, const HandoffMsg& m);
  bool certified_ok(const NodeState& n, CommitteeId k, const CertifiedPayload& cp) const;
  std::optional<Roster> committed_roster(const NodeState& n, CommitteeId k, NodeId leader) const;

  void on_timer(NodeState& n, const TimerMsg& t);

  // ---- run-wide state
  RunConfig cfg_;
  Schedule sched_;
  std::ostream* trace_;
  std::vector<crypto::KeyPair> node_keys_;
  std::unique_ptr<crypto::SimCrypto> crypto_;
  consensus::Directory dir_;
  std::unique_ptr<net::SimNetwork> net_;
  std::unique_ptr<Workload> workload_;
  adversary::CorruptionPlan plan_;
  std::set<NodeId> fraction_corrupted_;
  adversary::Blackboard board_;
  RunResult result_;

  // ---- per-round state
  Round round_ = 0;
  Tick round_start_ = 0;
  KeyAssignment assignment_;
  Digest randomness_;
  std::set<NodeId> participants_;
  reputation::ReputationTable reputation_;
  ledger::UtxoSet state_;
  std::optional<ledger::UtxoSet> post_state_;
  std::optional<Digest> post_state_for_;
  std::vector<std::vector<ledger::Transaction>> intake_;
  std::map<NodeId, adversary::StrategyPtr> corrupted_;
  std::vector<NodeState> nodes_;
  RoundMetrics metrics_;
  std::vector<std::array<std::array<double, kPhaseCount>, 2>> node_counts_;  // msgs, units
  std::map<Digest, std::size_t> block_acceptors_;
  std::map<Digest, PayloadPtr> block_by_digest_;
  std::set<std::pair<CommitteeId, std::uint32_t>> evicted_slots_;
  std::map<Digest, std::map<NodeId, double>> scores_by_block_;
  std::set<Digest> witness_seen_;
  std::map<consensus::InstanceKey, std::map<NodeId, double>> proposed_scores_;
  const ledger::UtxoSet& post_state(const Digest& block);
};

}  // namespace cycledger::sim
