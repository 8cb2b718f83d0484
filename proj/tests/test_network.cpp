#include <doctest.h>

#include <sstream>

#include "cycledger/network.hpp"

using namespace cycledger;
using namespace cycledger::net;

namespace {

MessagePtr msg() { return std::make_shared<const Message>(ConfigMsg{}); }
MessagePtr reg() { return std::make_shared<const Message>(RegisterMsg{}); }

// Nodes 0..4 form committee 0 and 5..9 committee 1; 0 and 5 are leaders,
// 1 and 6 partial members, 10 and 11 the referee.
SimNetwork make_net(NetworkParams p, std::uint64_t seed = 1) {
  SimNetwork net(12, p, seed);
  auto& t = net.topology();
  for (NodeId i = 0; i < 10; ++i) t.set_committee(i, i < 5 ? 0 : 1);
  for (NodeId i : {0u, 1u, 5u, 6u}) t.set_key(i);
  t.set_referee(10);
  t.set_referee(11);
  return net;
}

std::string run_trace(std::uint64_t seed) {
  NetworkParams p;
  p.delta = 4;
  p.gamma = 12;
  auto net = make_net(p, seed);
  std::ostringstream out;
  net.set_trace(&out);
  for (NodeId i = 1; i < 5; ++i) net.send(0, i, msg());
  net.send(0, 5, msg());
  net.send(2, 7, reg());
  while (!net.idle()) net.step();
  return out.str();
}

}  // namespace

TEST_CASE("intra-committee delivery stays within delta") {
  NetworkParams p;
  p.delta = 4;
  p.gamma = 12;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto net = make_net(p, seed);
    net.timer(0, 10, msg());
    net.step();
    net.send(0, 3, msg());
    const auto got = net.step();
    REQUIRE(got.size() == 1);
    CHECK(got[0].deliver_at > 10);
    CHECK(got[0].deliver_at <= 14);
    CHECK(got[0].cls == ChannelClass::IntraCommittee);
  }
}

TEST_CASE("leader to leader delivery stays within gamma") {
  NetworkParams p;
  p.delta = 4;
  p.gamma = 12;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto net = make_net(p, seed);
    net.timer(0, 10, msg());
    net.step();
    net.send(0, 5, msg());
    const auto got = net.step();
    REQUIRE(got.size() == 1);
    CHECK(got[0].deliver_at > 10);
    CHECK(got[0].deliver_at <= 22);
    CHECK(got[0].cls == ChannelClass::KeyLink);
  }
}

TEST_CASE("channel classes follow the topology") {
  const auto net = make_net({});
  const auto& t = net.topology();
  const Message m = ConfigMsg{};
  CHECK(t.classify(1, 4, m) == ChannelClass::IntraCommittee);
  CHECK(t.classify(10, 11, m) == ChannelClass::IntraCommittee);
  CHECK(t.classify(1, 6, m) == ChannelClass::KeyLink);
  CHECK(t.classify(0, 10, m) == ChannelClass::KeyLink);
  CHECK(t.classify(11, 6, m) == ChannelClass::KeyLink);
  CHECK_FALSE(t.classify(2, 7, m).has_value());
  CHECK_FALSE(t.classify(2, 10, m).has_value());
  CHECK(t.classify(2, 10, Message{RegisterMsg{}}) == ChannelClass::PartialSync);
  CHECK(t.classify(10, 3, Message{BlockMsg{}}) == ChannelClass::PartialSync);
}

TEST_CASE("sends without a link fail") {
  auto net = make_net({});
  CHECK_THROWS_AS(net.send(2, 7, msg()), Error);
  try {
    net.send(2, 7, msg());
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoChannel);
  }
  try {
    net.send(3, 3, msg());
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoChannel);
  }
  try {
    net.send(0, 40, msg());
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownNode);
  }
}

TEST_CASE("broadcast queues one envelope per other target") {
  auto net = make_net({});
  net.broadcast(0, std::vector<NodeId>{}, msg());
  CHECK(net.pending() == 0);
  const std::vector<NodeId> committee{0, 1, 2, 3, 4};
  net.broadcast(0, committee, msg());
  CHECK(net.pending() == 4);
}

TEST_CASE("adversary may reorder a corrupted sender but not exceed the bound") {
  NetworkParams p;
  p.delta = 4;
  p.gamma = 12;
  auto net = make_net(p);
  std::vector<bool> corrupted(12, false);
  corrupted[0] = true;
  net.set_corrupted(corrupted);
  // Reverse the natural order and ask for far too late a delivery on one.
  net.set_adversary([](const Envelope& e) -> std::optional<Tick> {
    if (e.to == 4) return 100;
    return 5 - static_cast<Tick>(e.to);
  });
  const std::vector<NodeId> committee{0, 1, 2, 3, 4};
  net.broadcast(0, committee, msg());
  std::vector<NodeId> order;
  while (!net.idle()) {
    for (const auto& e : net.step()) {
      CHECK(e.deliver_at - e.sent_at <= 4);
      order.push_back(e.to);
    }
  }
  CHECK(order == std::vector<NodeId>{3, 2, 1, 4});
  CHECK(net.bound_violations() == 0);
}

TEST_CASE("adversary can drop a corrupted sender's messages") {
  auto net = make_net({});
  std::vector<bool> corrupted(12, false);
  corrupted[1] = true;
  net.set_corrupted(corrupted);
  net.set_adversary([](const Envelope&) -> std::optional<Tick> { return std::nullopt; });
  net.send(1, 2, msg());
  net.send(0, 2, msg());
  CHECK(net.pending() == 1);
  CHECK(net.dropped() == 1);
}

TEST_CASE("step returns due envelopes in sequence order") {
  NetworkParams p;
  p.policy = DelayPolicy::Min;
  auto net = make_net(p);
  CHECK(net.step().empty());
  CHECK(net.now() == 0);
  net.send(0, 1, msg());
  net.send(0, 2, msg());
  const auto got = net.step();
  REQUIRE(got.size() == 2);
  CHECK(got[0].sequence < got[1].sequence);
  CHECK(got[0].to == 1);
  CHECK(net.now() == got[0].deliver_at);
}

TEST_CASE("identical seeds give identical traces") {
  CHECK(run_trace(3) == run_trace(3));
  CHECK_FALSE(run_trace(3).empty());
}

TEST_CASE("timers fire locally and are clamped to now") {
  auto net = make_net({});
  net.timer(2, -5, msg());
  const auto got = net.step();
  REQUIRE(got.size() == 1);
  CHECK(got[0].cls == ChannelClass::Local);
  CHECK(got[0].deliver_at == 0);
}

TEST_CASE("network rejects inverted bounds") {
  NetworkParams p;
  p.delta = 5;
  p.gamma = 2;
  CHECK_THROWS_AS(SimNetwork(4, p, 1), Error);
}
