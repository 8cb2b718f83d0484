#include <doctest.h>

#include <fmt/format.h>

#include "cycledger/ledger.hpp"
#include "cycledger/rng.hpp"
#include "oracles.hpp"

using namespace cycledger;
using namespace cycledger::ledger;

namespace {

constexpr std::uint32_t kShards = 2;

// Identities plus a wallet and a state holding one genesis output per key.
struct Bank {
  oracle::Identities ids{16};
  std::map<PublicKey, crypto::SecretKey> wallet;
  UtxoSet state{kShards};
  std::vector<Digest> coin;  // genesis output of key i

  explicit Bank(std::uint64_t amount = 10) {
    for (std::size_t i = 0; i < ids.keys.size(); ++i) {
      const auto& k = ids.keys[i];
      wallet[k.public_key] = k.secret_key;
      const Digest id = crypto::hash(std::string_view{fmt::format("genesis {}", i)});
      state.add(Utxo{id, k.public_key, amount, shard_of(k.public_key, kShards)});
      coin.push_back(id);
    }
  }

  const PublicKey& key(std::size_t i) const { return ids.keys[i].public_key; }
  CommitteeId shard(std::size_t i) const { return shard_of(key(i), kShards); }

  // Keys of shard s, in index order.
  std::vector<std::size_t> in_shard(CommitteeId s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ids.keys.size(); ++i)
      if (shard(i) == s) out.push_back(i);
    return out;
  }

  Transaction pay(std::vector<std::size_t> from, std::vector<std::pair<std::size_t, std::uint64_t>> to,
                  std::uint64_t nonce = 0) const {
    Transaction tx;
    for (auto i : from) tx.inputs.push_back(coin[i]);
    for (auto [j, amount] : to) tx.outputs.push_back({key(j), amount});
    tx.nonce = nonce;
    sign_inputs(tx, state, wallet, ids.crypto);
    return tx;
  }
};

}  // namespace

TEST_CASE("fee is the difference between inputs and outputs") {
  Bank bank;
  const auto tx = bank.pay({0}, {{1, 7}, {2, 2}});
  const auto check = check_transaction(tx, bank.state, bank.ids.crypto);
  CHECK(check.valid);
  CHECK(check.fee == 1);
}

TEST_CASE("validation rejects malformed spends") {
  Bank bank;
  const auto& crypto = bank.ids.crypto;
  CHECK_FALSE(validate(bank.pay({0}, {{1, 11}}), bank.state, crypto));
  CHECK(validate(bank.pay({0}, {{1, 10}}), bank.state, crypto));

  Transaction empty;
  CHECK(check_transaction(empty, bank.state, crypto).reason == "no inputs");

  auto dup = bank.pay({0}, {{1, 5}});
  dup.inputs.push_back(dup.inputs[0]);
  sign_inputs(dup, bank.state, bank.wallet, crypto);
  CHECK(check_transaction(dup, bank.state, crypto).reason == "duplicate input");

  auto forged = bank.pay({0}, {{1, 5}});
  forged.outputs[0].amount = 6;
  CHECK(check_transaction(forged, bank.state, crypto).reason == "bad signature");

  auto unsigned_tx = bank.pay({0}, {{1, 5}});
  unsigned_tx.signatures.clear();
  CHECK_FALSE(validate(unsigned_tx, bank.state, crypto));
}

TEST_CASE("a spent output cannot be spent again") {
  Bank bank;
  const auto first = bank.pay({0}, {{1, 10}});
  const auto second = bank.pay({0}, {{2, 10}}, 1);
  REQUIRE(validate(first, bank.state, bank.ids.crypto));
  bank.state.apply(first);
  CHECK_FALSE(validate(second, bank.state, bank.ids.crypto));
  CHECK(check_transaction(second, bank.state, bank.ids.crypto).reason ==
        "input missing or spent");
}

TEST_CASE("outputs land in the owner's shard") {
  Bank bank;
  const auto tx = bank.pay({0}, {{1, 4}, {2, 6}});
  const auto outs = bank.state.outputs_of(tx);
  REQUIRE(outs.size() == 2);
  CHECK(outs[0].shard == bank.shard(1));
  CHECK(outs[1].shard == bank.shard(2));
  CHECK(outs[0].id == utxo_id(tx.id(), 0));
  CHECK(outs[0].id != outs[1].id);
}

TEST_CASE("input shard requires all inputs in one shard") {
  Bank bank;
  const auto s0 = bank.in_shard(0);
  const auto s1 = bank.in_shard(1);
  REQUIRE(s0.size() >= 2);
  REQUIRE(!s1.empty());
  CHECK(input_shard(bank.pay({s0[0], s0[1]}, {{s0[0], 20}}), bank.state) == CommitteeId{0});
  CHECK_FALSE(input_shard(bank.pay({s0[0], s1[0]}, {{s0[0], 20}}), bank.state).has_value());
  const auto legs = leg_shards(bank.pay({s0[0]}, {{s0[1], 5}, {s1[0], 5}}), 0, kShards);
  CHECK(legs == std::vector<CommitteeId>{1});
}

TEST_CASE("packing keeps the first of two conflicting spends") {
  Bank bank;
  const auto s0 = bank.in_shard(0);
  const auto a = bank.pay({s0[0]}, {{s0[1], 9}});
  const auto b = bank.pay({s0[0]}, {{s0[2], 8}}, 1);
  const auto result =
      pack_transactions(bank.state, {{0, {a, b, a}}}, {}, 0, bank.ids.crypto);
  REQUIRE(result.sets.size() == 1);
  CHECK(result.sets[0].txs == std::vector<Transaction>{a});
  CHECK(result.dropped == std::vector<Transaction>{b});
  CHECK(result.fees == 1);
}

TEST_CASE("packing deduplicates across submissions") {
  Bank bank;
  const auto s0 = bank.in_shard(0);
  const auto a = bank.pay({s0[0]}, {{s0[1], 10}});
  const auto result =
      pack_transactions(bank.state, {{0, {a}}, {0, {a}}}, {}, 0, bank.ids.crypto);
  std::size_t packed = 0;
  for (const auto& s : result.sets) packed += s.txs.size();
  CHECK(packed == 1);
}

TEST_CASE("cross-shard transactions need every leg confirmed") {
  Bank bank;
  const auto s0 = bank.in_shard(0);
  const auto s1 = bank.in_shard(1);
  const auto tx = bank.pay({s0[0]}, {{s1[0], 10}});
  auto without = pack_transactions(bank.state, {{0, {tx}}}, {}, 0, bank.ids.crypto);
  CHECK(without.sets.empty());
  CHECK(without.dropped.size() == 1);
  auto with = pack_transactions(bank.state, {{0, {tx}}}, {{tx.id(), 1}}, 0, bank.ids.crypto);
  REQUIRE(with.sets.size() == 1);
  CHECK(with.cross_shard == 1);
}

TEST_CASE("packing refuses a transaction submitted by the wrong committee") {
  Bank bank;
  const auto s0 = bank.in_shard(0);
  const auto tx = bank.pay({s0[0]}, {{s0[1], 10}});
  auto result = pack_transactions(bank.state, {{1, {tx}}}, {}, 0, bank.ids.crypto);
  CHECK(result.sets.empty());
  CHECK(result.dropped.size() == 1);
}

TEST_CASE("an empty block is valid and changes nothing") {
  Bank bank;
  auto result = pack_transactions(bank.state, {}, {}, 0, bank.ids.crypto);
  CHECK(result.sets.empty());
  CHECK(result.fees == 0);
  Block block;
  const auto before = bank.state.total();
  CHECK(apply_block(bank.state, block) == 0);
  CHECK(bank.state.total() == before);
  CHECK(block.tx_count() == 0);
}

TEST_CASE("the size cap leaves valid transactions for the next block") {
  Bank bank;
  const auto s0 = bank.in_shard(0);
  REQUIRE(s0.size() >= 3);
  std::vector<Transaction> txs;
  for (std::size_t k = 0; k < 3; ++k) txs.push_back(bank.pay({s0[k]}, {{s0[k], 9}}));
  auto result = pack_transactions(bank.state, {{0, txs}}, {}, 2, bank.ids.crypto);
  REQUIRE(result.sets.size() == 1);
  CHECK(result.sets[0].txs.size() == 2);
  REQUIRE(result.remaining.size() == 1);
  CHECK(result.remaining[0] == txs[2]);

  Block block;
  block.tx_sets = result.sets;
  UtxoSet post = bank.state;
  apply_block(post, block);
  const auto left = remaining_transactions(txs, block, post, bank.ids.crypto);
  CHECK(left == std::vector<Transaction>{txs[2]});
}

TEST_CASE("applying packed blocks conserves value up to fees") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Bank bank(100);
    Rng rng(seed);
    std::vector<DecisionSubmission> subs(kShards);
    for (CommitteeId s = 0; s < kShards; ++s) subs[s].committee = s;
    std::set<std::pair<Digest, CommitteeId>> legs;
    for (std::size_t i = 0; i < bank.ids.keys.size(); ++i) {
      // Some spends reuse a coin so that conflicts occur.
      const std::size_t from = rng.below(4) == 0 ? (i + 1) % bank.ids.keys.size() : i;
      const std::size_t to = rng.below(bank.ids.keys.size());
      const std::uint64_t amount = rng.below(101);
      auto tx = bank.pay({from}, {{to, amount}}, i);
      if (rng.below(2) == 0) legs.insert({tx.id(), bank.shard(to)});
      subs[bank.shard(from)].decided.push_back(std::move(tx));
    }
    const auto result = pack_transactions(bank.state, subs, legs, 0, bank.ids.crypto);
    Block block;
    block.tx_sets = result.sets;
    const auto before = bank.state.total();
    const auto fees = apply_block(bank.state, block);
    CHECK(fees == result.fees);
    CHECK(bank.state.total() + fees == before);
    std::set<Digest> inputs;
    for (const auto& s : result.sets)
      for (const auto& tx : s.txs)
        for (const auto& in : tx.inputs) CHECK(inputs.insert(in).second);
  }
}

TEST_CASE("block digest covers every field") {
  Block a;
  a.round = 3;
  Block b = a;
  CHECK(a.digest() == b.digest());
  b.total_fees = 1;
  CHECK(a.digest() != b.digest());
  b = a;
  b.evicted = {4};
  CHECK(a.digest() != b.digest());
  b = a;
  b.reputations = {{1, 0.5}};
  CHECK(a.digest() != b.digest());
  CHECK(b.reputation_of(1) == 0.5);
  CHECK(b.reputation_of(2) == 0.0);
}
