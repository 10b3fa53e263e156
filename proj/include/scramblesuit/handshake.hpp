#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <variant>

#include "scramblesuit/crypto.hpp"

namespace scramblesuit::handshake {

constexpr std::size_t kTicketLen = 80;  // iv(16) + ciphertext(48) + tag(16)
constexpr std::size_t kTicketIvLen = 16;
constexpr std::size_t kTicketBodyLen = 48;  // master(32) + issue(8) + zeros(8)
constexpr std::size_t kPublicKeyLen = 192;  // 1536-bit group element
constexpr std::uint32_t kMaxPadLen = 1388;
constexpr std::int64_t kTicketLifetimeSecs = 7 * 24 * 3600;
constexpr std::int64_t kKeyRotationSecs = 7 * 24 * 3600;
constexpr std::int64_t kReplayHorizonHours = 1;

/// Byte source; injectable so tests can force key material.
using RandomSource = std::function<Bytes(std::size_t)>;

struct Epoch {
  std::uint64_t hours = 0;

  static Epoch from_unix(std::int64_t unix_secs) {
    return {static_cast<std::uint64_t>(unix_secs) / 3600};
  }
  Bytes to_bytes() const {
    Bytes b;
    put_u64be(b, hours);
    return b;
  }
  bool operator==(const Epoch&) const = default;
};

struct SessionTicket {
  std::array<std::uint8_t, kTicketLen> blob{};

  ByteSpan span() const { return {blob.data(), blob.size()}; }
  bool operator==(const SessionTicket&) const = default;
};

struct TicketKeyPair {
  std::array<std::uint8_t, 32> enc_key{};
  std::array<std::uint8_t, 32> mac_key{};
  std::int64_t created_at = 0;

  static TicketKeyPair generate(std::int64_t now);
};

struct TicketKeyStore {
  TicketKeyPair current;
  std::optional<TicketKeyPair> superseded;

  static TicketKeyStore generate(std::int64_t now);
};

/// One-hour cache of redeemed master keys / handshake MAC tags. Entries
/// shorter than 32 bytes are zero-extended.
class ReplayCache {
 public:
  void insert(ByteSpan value, std::int64_t now);
  bool contains(ByteSpan value, std::int64_t now);
  std::size_t size() const { return entries_.size(); }

 private:
  void evict(std::int64_t now);
  std::unordered_map<std::string, std::int64_t> entries_;  // value -> epoch hour
};

// --- session tickets -------------------------------------------------------

SessionTicket issue_ticket(const TicketKeyStore& store,
                           const crypto::MasterKey& master, std::int64_t now);

std::optional<crypto::MasterKey> redeem_ticket(const TicketKeyStore& store,
                                               ByteSpan blob, std::int64_t now);

/// Rotate in place when the current pair is at least seven days old.
void rotate_if_due(TicketKeyStore& store, std::int64_t now);

/// MAC key for handshake messages, derived from the (prospective) master key.
std::array<std::uint8_t, 32> handshake_mac_key(const crypto::MasterKey& master);

Bytes build_ticket_handshake(const crypto::MasterKey& master,
                             const SessionTicket& ticket, std::uint32_t pad_len,
                             Epoch epoch,
                             const RandomSource& rng = crypto::secure_random);

// --- UniformDH -------------------------------------------------------------

struct UniformDhKeypair {
  Bytes private_x;  // 192 bytes big-endian, even
  std::array<std::uint8_t, kPublicKeyLen> public_wire{};

  ByteSpan wire_span() const { return {public_wire.data(), public_wire.size()}; }
};

/// Fresh keypair over the RFC 3526 1536-bit group, g = 2. The wire form is
/// X or p - X, chosen by one random bit.
UniformDhKeypair uniformdh_keypair(
    const RandomSource& rng = crypto::secure_random);

/// Deterministic variant for tests: explicit private key bytes and an
/// explicit choice of which representative goes on the wire.
UniformDhKeypair uniformdh_keypair_from(ByteSpan private_x, bool send_negated);

std::optional<crypto::MasterKey> uniformdh_shared(const UniformDhKeypair& own,
                                                  ByteSpan peer_wire);

Bytes build_uniformdh_handshake(ByteSpan mac_key_kb,
                                const UniformDhKeypair& own,
                                std::uint32_t pad_len, Epoch epoch,
                                const RandomSource& rng = crypto::secure_random);

// --- incremental server-side scanning --------------------------------------

struct NeedMoreData {};
struct Reject {};

struct TicketAccepted {
  crypto::MasterKey master;
  std::size_t consumed = 0;
};

struct UniformDhAccepted {
  std::array<std::uint8_t, kPublicKeyLen> peer_public{};
  std::array<std::uint8_t, crypto::kMacLen> mac_tag{};
  std::size_t consumed = 0;
};

using TicketScanResult = std::variant<NeedMoreData, Reject, TicketAccepted>;
using UniformDhScanResult =
    std::variant<NeedMoreData, Reject, UniformDhAccepted>;

/// Scan a growing buffer for `ticket || padding || MAC`. Replay entries are
/// checked here but armed by the session layer.
TicketScanResult scan_ticket_handshake(const TicketKeyStore& store,
                                       ReplayCache& replay, ByteSpan buffered,
                                       std::int64_t now);

UniformDhScanResult scan_uniformdh_handshake(ByteSpan mac_key_kb,
                                             ReplayCache& replay,
                                             ByteSpan buffered,
                                             std::int64_t now);

}  // namespace scramblesuit::handshake
