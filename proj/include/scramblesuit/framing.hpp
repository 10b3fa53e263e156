#pragma once

#include <cstdint>
#include <vector>

#include "scramblesuit/crypto.hpp"

namespace scramblesuit::framing {

constexpr std::size_t kTagLen = 16;
constexpr std::size_t kHeaderLen = 21;  // tag(16) + total(2) + payload(2) + flags(1)
constexpr std::uint16_t kMaxBodyLen = 1460;

namespace flags {
constexpr std::uint8_t kPayload = 0x01;
constexpr std::uint8_t kNewTicket = 0x02;
constexpr std::uint8_t kTicketAck = 0x04;
constexpr std::uint8_t kDefinedMask = 0x07;
}  // namespace flags

constexpr std::size_t kNewTicketPayloadLen = 112;  // master(32) + ticket(80)

struct ProtocolMessage {
  std::uint8_t flags = flags::kPayload;
  Bytes payload;
  std::uint16_t padding_len = 0;

  std::uint16_t payload_len() const {
    return static_cast<std::uint16_t>(payload.size());
  }
  std::uint16_t total_len() const {
    return static_cast<std::uint16_t>(payload.size() + padding_len);
  }
  bool valid() const;

  bool operator==(const ProtocolMessage&) const = default;
};

/// Encrypt-then-MAC codec over one connection's key set. A MAC or framing
/// failure poisons the codec permanently; a poisoned codec emits nothing.
class FrameCodec {
 public:
  explicit FrameCodec(const crypto::SessionKeySet& keys);

  /// Wire bytes for one message: tag || Enc(total || payload_len || flags ||
  /// payload || padding). Throws on an invalid message.
  Bytes encode(const ProtocolMessage& msg);

  /// Feed received bytes, return fully verified messages in order.
  std::vector<ProtocolMessage> decode_stream(ByteSpan chunk);

  bool poisoned() const { return poisoned_; }

 private:
  crypto::SessionKeySet keys_;
  crypto::StreamCipher send_cipher_;
  crypto::StreamCipher recv_cipher_;
  Bytes recv_buf_;
  bool poisoned_ = false;
};

/// Pack `payload` into messages whose bodies match `target_lengths`
/// (split when the target is smaller than what is left, pad otherwise).
std::vector<ProtocolMessage> make_data_messages(
    ByteSpan payload, const std::vector<std::uint32_t>& target_lengths);

}  // namespace scramblesuit::framing
