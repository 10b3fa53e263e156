#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "scramblesuit/framing.hpp"

using namespace scramblesuit;
using namespace scramblesuit::framing;

namespace {

struct CodecPair {
  FrameCodec sender;
  FrameCodec receiver;
};

CodecPair make_pair_() {
  auto master = crypto::MasterKey::random();
  return {FrameCodec(crypto::derive_session_keys(master, crypto::Role::Client)),
          FrameCodec(crypto::derive_session_keys(master, crypto::Role::Server))};
}

ProtocolMessage random_message(std::mt19937& gen) {
  ProtocolMessage msg;
  msg.flags = flags::kPayload;
  std::uint16_t total = static_cast<std::uint16_t>(gen() % (kMaxBodyLen + 1));
  std::uint16_t payload_len = static_cast<std::uint16_t>(
      total == 0 ? 0 : gen() % (total + 1));
  msg.payload.resize(payload_len);
  for (auto& b : msg.payload) b = static_cast<std::uint8_t>(gen());
  msg.padding_len = static_cast<std::uint16_t>(total - payload_len);
  return msg;
}

}  // namespace

TEST_CASE("empty message is 21 wire bytes") {
  auto [sender, receiver] = make_pair_();
  ProtocolMessage msg;
  msg.flags = flags::kPayload;
  Bytes wire = sender.encode(msg);
  CHECK(wire.size() == kHeaderLen);
  auto decoded = receiver.decode_stream({wire.data(), wire.size()});
  REQUIRE(decoded.size() == 1);
  CHECK(decoded[0] == msg);
}

TEST_CASE("full message fills the MTU") {
  auto [sender, receiver] = make_pair_();
  ProtocolMessage msg;
  msg.flags = flags::kPayload;
  msg.payload = crypto::secure_random(1460);
  Bytes wire = sender.encode(msg);
  CHECK(wire.size() == 1481);
  auto decoded = receiver.decode_stream({wire.data(), wire.size()});
  REQUIRE(decoded.size() == 1);
  CHECK(decoded[0].payload == msg.payload);
}

TEST_CASE("oversize and malformed messages are refused at encode") {
  auto [sender, receiver] = make_pair_();
  ProtocolMessage msg;
  msg.flags = flags::kPayload;
  msg.payload.resize(1461);
  CHECK_THROWS(sender.encode(msg));

  ProtocolMessage no_flags;
  no_flags.flags = 0;
  CHECK_THROWS(sender.encode(no_flags));

  ProtocolMessage reserved;
  reserved.flags = 0x81;
  CHECK_THROWS(sender.encode(reserved));

  ProtocolMessage bad_ticket;
  bad_ticket.flags = flags::kNewTicket;
  bad_ticket.payload.resize(10);
  CHECK_THROWS(sender.encode(bad_ticket));
}

TEST_CASE("decode(encode(m)) == m over random messages") {
  auto [sender, receiver] = make_pair_();
  std::mt19937 gen(11);
  for (int i = 0; i < 10000; i++) {
    ProtocolMessage msg = random_message(gen);
    Bytes wire = sender.encode(msg);
    CHECK(wire.size() == kHeaderLen + msg.total_len());
    auto decoded = receiver.decode_stream({wire.data(), wire.size()});
    REQUIRE(decoded.size() == 1);
    CHECK(decoded[0] == msg);
  }
}

TEST_CASE("byte-by-byte delivery emits the message exactly once") {
  auto [sender, receiver] = make_pair_();
  ProtocolMessage msg;
  msg.flags = flags::kPayload;
  msg.payload = crypto::secure_random(300);
  msg.padding_len = 17;
  Bytes wire = sender.encode(msg);
  std::size_t emitted = 0;
  for (std::size_t i = 0; i < wire.size(); i++) {
    auto decoded = receiver.decode_stream({wire.data() + i, 1});
    emitted += decoded.size();
    if (i + 1 < wire.size()) CHECK(decoded.empty());
  }
  CHECK(emitted == 1);
}

TEST_CASE("coalesced messages decode in order") {
  auto [sender, receiver] = make_pair_();
  ProtocolMessage a;
  a.flags = flags::kPayload;
  a.payload = to_bytes("first");
  ProtocolMessage b;
  b.flags = flags::kPayload;
  b.payload = to_bytes("second");
  Bytes wire = sender.encode(a);
  Bytes wb = sender.encode(b);
  wire.insert(wire.end(), wb.begin(), wb.end());
  auto decoded = receiver.decode_stream({wire.data(), wire.size()});
  REQUIRE(decoded.size() == 2);
  CHECK(decoded[0].payload == to_bytes("first"));
  CHECK(decoded[1].payload == to_bytes("second"));
}

TEST_CASE("a flipped ciphertext bit poisons the stream for good") {
  auto [sender, receiver] = make_pair_();
  ProtocolMessage msg;
  msg.flags = flags::kPayload;
  msg.payload = crypto::secure_random(64);
  Bytes wire = sender.encode(msg);
  wire[30] ^= 0x01;
  CHECK(receiver.decode_stream({wire.data(), wire.size()}).empty());
  CHECK(receiver.poisoned());

  // even a later valid message is never delivered
  Bytes good = sender.encode(msg);
  CHECK(receiver.decode_stream({good.data(), good.size()}).empty());
}

TEST_CASE("arbitrary chunking preserves the message sequence") {
  std::mt19937 gen(13);
  for (int trial = 0; trial < 50; trial++) {
    auto [sender, receiver] = make_pair_();
    std::vector<ProtocolMessage> sent;
    Bytes wire;
    for (int i = 0; i < 20; i++) {
      sent.push_back(random_message(gen));
      Bytes w = sender.encode(sent.back());
      wire.insert(wire.end(), w.begin(), w.end());
    }
    std::vector<ProtocolMessage> received;
    std::size_t off = 0;
    while (off < wire.size()) {
      std::size_t n = std::min<std::size_t>(1 + gen() % 700, wire.size() - off);
      auto decoded = receiver.decode_stream({wire.data() + off, n});
      received.insert(received.end(), decoded.begin(), decoded.end());
      off += n;
    }
    CHECK(received == sent);
  }
}

TEST_CASE("padding never reaches the application and payload survives") {
  auto [sender, receiver] = make_pair_();
  std::mt19937 gen(17);
  Bytes app = crypto::secure_random(5000);
  std::vector<std::uint32_t> targets;
  std::size_t capacity = 0;
  while (capacity < app.size()) {
    std::uint32_t t = 1 + gen() % 1000;
    targets.push_back(t);
    capacity += t;
  }
  auto msgs = make_data_messages({app.data(), app.size()}, targets);
  Bytes reassembled;
  for (const auto& m : msgs) {
    Bytes w = sender.encode(m);
    for (const auto& d : receiver.decode_stream({w.data(), w.size()}))
      append(reassembled, {d.payload.data(), d.payload.size()});
  }
  CHECK(reassembled == app);
}

TEST_CASE("make_data_messages splits and pads per the target list") {
  Bytes app(100, 0xaa);
  auto msgs = make_data_messages({app.data(), app.size()}, {40, 200});
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0].total_len() == 40);
  CHECK(msgs[0].payload_len() == 40);
  CHECK(msgs[1].total_len() == 200);
  CHECK(msgs[1].payload_len() == 60);
  CHECK(msgs[1].padding_len == 140);

  auto pure_pad = make_data_messages({}, {50});
  REQUIRE(pure_pad.size() == 1);
  CHECK(pure_pad[0].payload_len() == 0);
  CHECK(pure_pad[0].total_len() == 50);
  CHECK((pure_pad[0].flags & flags::kPayload) != 0);
}

TEST_CASE("no byte offset is constant across sessions") {
  constexpr std::size_t kProbe = 128;
  std::vector<Bytes> wires;
  for (int i = 0; i < 100; i++) {
    auto [sender, receiver] = make_pair_();
    ProtocolMessage msg;
    msg.flags = flags::kPayload;
    msg.payload.assign(kProbe, 0x00);
    wires.push_back(sender.encode(msg));
  }
  for (std::size_t off = 0; off < kHeaderLen + kProbe; off++) {
    bool constant = true;
    for (std::size_t i = 1; i < wires.size(); i++)
      if (wires[i][off] != wires[0][off]) constant = false;
    CHECK_FALSE(constant);
  }
}
