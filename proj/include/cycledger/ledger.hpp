#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cycledger/crypto.hpp"
#include "cycledger/member.hpp"
#include "cycledger/types.hpp"

namespace cycledger::ledger {

using crypto::Digest;
using crypto::PublicKey;

struct TxOutput {
  PublicKey owner;
  std::uint64_t amount = 0;
  bool operator==(const TxOutput&) const = default;
};

struct Transaction {
  std::vector<Digest> inputs;
  std::vector<TxOutput> outputs;
  std::uint64_t nonce = 0;
  std::vector<crypto::Signature> signatures;  // one per input, by the input owner

  // Digest of everything except the signatures; this is what owners sign and
  // what identifies the transaction.
  Digest id() const;
  crypto::Bytes body() const;
  std::uint64_t output_total() const;
  bool operator==(const Transaction&) const = default;
};

struct Utxo {
  Digest id;
  PublicKey owner;
  std::uint64_t amount = 0;
  CommitteeId shard = 0;
  bool operator==(const Utxo&) const = default;
};

Digest utxo_id(const Digest& tx_id, std::uint32_t output_index);
CommitteeId shard_of(const PublicKey& owner, std::uint32_t committees);

class UtxoSet {
 public:
  UtxoSet() = default;
  explicit UtxoSet(std::uint32_t committees) : committees_(committees) {}

  std::uint32_t committees() const { return committees_; }
  const Utxo* find(const Digest& id) const;
  bool contains(const Digest& id) const { return utxos_.contains(id); }
  void add(const Utxo& u);
  bool erase(const Digest& id) { return utxos_.erase(id) > 0; }
  std::size_t size() const { return utxos_.size(); }
  std::uint64_t total() const;
  std::uint64_t shard_total(CommitteeId shard) const;
  // Digest over the canonical listing of one shard's outputs.
  Digest shard_digest(CommitteeId shard) const;
  const std::map<Digest, Utxo>& all() const { return utxos_; }

  // Outputs of `tx` as they will appear once the transaction is applied.
  std::vector<Utxo> outputs_of(const Transaction& tx) const;
  // Spends inputs and adds outputs. No validation.
  void apply(const Transaction& tx);

 private:
  std::uint32_t committees_ = 1;
  std::map<Digest, Utxo> utxos_;
};

struct TxCheck {
  bool valid = false;
  std::uint64_t fee = 0;
  std::string reason;
};

// The validation predicate V: inputs exist and are unspent, no duplicate
// inputs, every input signed by its owner, and inputs cover outputs.
TxCheck check_transaction(const Transaction& tx, const UtxoSet& state,
                          const crypto::CryptoProvider& crypto);
inline bool validate(const Transaction& tx, const UtxoSet& state,
                     const crypto::CryptoProvider& crypto) {
  return check_transaction(tx, state, crypto).valid;
}

// Shard holding the inputs, or nullopt if inputs are missing or span shards.
std::optional<CommitteeId> input_shard(const Transaction& tx, const UtxoSet& state);
// Foreign shards receiving outputs (excluding the input shard), ascending.
std::vector<CommitteeId> leg_shards(const Transaction& tx, CommitteeId source,
                                    std::uint32_t committees);

struct PackedSet {
  CommitteeId committee = 0;
  std::vector<Transaction> txs;
  bool operator==(const PackedSet&) const = default;
};

struct Block {
  Round round = 0;
  std::vector<PackedSet> tx_sets;
  Digest next_randomness;
  std::vector<NodeId> participants;                    // next round participants
  std::vector<std::pair<NodeId, double>> reputations;  // after this round, sorted by id
  KeyAssignment next;
  std::vector<NodeId> evicted;  // leaders evicted during this round
  std::uint64_t total_fees = 0;

  Digest digest() const;
  std::size_t tx_count() const;
  double reputation_of(NodeId id) const;
  bool operator==(const Block&) const = default;
};

// A committee's certified decision, as seen by the referee when packing.
struct DecisionSubmission {
  CommitteeId committee = 0;
  std::vector<Transaction> decided;  // TXdecSET of the source committee
};

struct PackResult {
  std::vector<PackedSet> sets;
  std::uint64_t fees = 0;
  std::vector<Transaction> remaining;  // valid but over the size cap
  std::vector<Transaction> dropped;    // invalid, conflicting, or missing legs
  std::size_t cross_shard = 0;
};

// Referee-side packing. Submissions are processed in ascending committee id;
// a transaction is packed once, only if it validates against `pre`, none of
// its inputs were already packed this block, and every foreign leg confirmed
// it (`confirmed_legs` holds (tx id, leg committee)). `cap` = 0 is unlimited.
PackResult pack_transactions(const UtxoSet& pre, std::vector<DecisionSubmission> submissions,
                             const std::set<std::pair<Digest, CommitteeId>>& confirmed_legs,
                             std::size_t cap, const crypto::CryptoProvider& crypto);

// Applies every packed transaction; returns fees collected.
std::uint64_t apply_block(UtxoSet& state, const Block& block);

// Decided transactions of one committee that did not make it into `block`
// but still validate against `post`.
std::vector<Transaction> remaining_transactions(const std::vector<Transaction>& decided,
                                                const Block& block, const UtxoSet& post,
                                                const crypto::CryptoProvider& crypto);

// Wallet helper: signs every input with the owner's key.
void sign_inputs(Transaction& tx, const UtxoSet& state,
                 const std::map<PublicKey, crypto::SecretKey>& wallet,
                 const crypto::CryptoProvider& crypto);

}  // namespace cycledger::ledger
