#include "scramblesuit/framing.hpp"

#include <stdexcept>

namespace scramblesuit::framing {

bool ProtocolMessage::valid() const {
  if (payload.size() + padding_len > kMaxBodyLen) return false;
  if ((flags & ~flags::kDefinedMask) != 0) return false;
  if ((flags & flags::kDefinedMask) == 0) return false;
  if ((flags & flags::kNewTicket) && payload.size() != kNewTicketPayloadLen)
    return false;
  return true;
}

FrameCodec::FrameCodec(const crypto::SessionKeySet& keys)
    : keys_(keys),
      send_cipher_({keys.send_enc_key.data(), keys.send_enc_key.size()},
                   {keys.send_ctr_nonce.data(), keys.send_ctr_nonce.size()}),
      recv_cipher_({keys.recv_enc_key.data(), keys.recv_enc_key.size()},
                   {keys.recv_ctr_nonce.data(), keys.recv_ctr_nonce.size()}) {}

Bytes FrameCodec::encode(const ProtocolMessage& msg) {
  if (!msg.valid()) throw std::invalid_argument("invalid protocol message");

  Bytes plain;
  plain.reserve(5 + msg.total_len());
  put_u16be(plain, msg.total_len());
  put_u16be(plain, msg.payload_len());
  plain.push_back(msg.flags);
  append(plain, {msg.payload.data(), msg.payload.size()});
  plain.resize(plain.size() + msg.padding_len, 0);

  send_cipher_.process_inplace(plain.data(), plain.size());
  auto tag = crypto::mac128(
      {keys_.send_mac_key.data(), keys_.send_mac_key.size()},
      {plain.data(), plain.size()});

  Bytes wire;
  wire.reserve(kHeaderLen + msg.total_len());
  append(wire, {tag.data(), tag.size()});
  append(wire, {plain.data(), plain.size()});
  return wire;
}

std::vector<ProtocolMessage> FrameCodec::decode_stream(ByteSpan chunk) {
  std::vector<ProtocolMessage> out;
  if (poisoned_) return out;
  append(recv_buf_, chunk);

  while (recv_buf_.size() >= kHeaderLen) {
    // peek at the lengths with a cloned cipher; commit only after the MAC
    // verifies over the whole encrypted region
    crypto::StreamCipher peek = recv_cipher_;
    std::uint8_t hdr[5];
    std::memcpy(hdr, recv_buf_.data() + kTagLen, 5);
    peek.process_inplace(hdr, 5);
    std::uint16_t total_len = get_u16be(hdr);
    std::uint16_t payload_len = get_u16be(hdr + 2);
    std::uint8_t msg_flags = hdr[4];

    if (total_len > kMaxBodyLen || payload_len > total_len) {
      poisoned_ = true;
      return out;
    }
    const std::size_t wire_len = kHeaderLen + total_len;
    if (recv_buf_.size() < wire_len) break;

    ByteSpan encrypted(recv_buf_.data() + kTagLen, 5 + total_len);
    if (!crypto::mac128_verify(
            {keys_.recv_mac_key.data(), keys_.recv_mac_key.size()}, encrypted,
            ByteSpan(recv_buf_.data(), kTagLen))) {
      poisoned_ = true;
      return out;
    }

    Bytes body(recv_buf_.data() + kTagLen, recv_buf_.data() + wire_len);
    recv_cipher_.process_inplace(body.data(), body.size());

    ProtocolMessage msg;
    msg.flags = msg_flags;
    msg.payload.assign(body.begin() + 5, body.begin() + 5 + payload_len);
    msg.padding_len = static_cast<std::uint16_t>(total_len - payload_len);
    if (!msg.valid()) {
      poisoned_ = true;
      return out;
    }
    out.push_back(std::move(msg));
    recv_buf_.erase(recv_buf_.begin(), recv_buf_.begin() + wire_len);
  }
  return out;
}

std::vector<ProtocolMessage> make_data_messages(
    ByteSpan payload, const std::vector<std::uint32_t>& target_lengths) {
  std::vector<ProtocolMessage> msgs;
  std::size_t off = 0;
  for (std::uint32_t target : target_lengths) {
    std::size_t take = std::min<std::size_t>(target, payload.size() - off);
    ProtocolMessage msg;
    msg.flags = flags::kPayload;
    msg.payload.assign(payload.begin() + off, payload.begin() + off + take);
    msg.padding_len = static_cast<std::uint16_t>(target - take);
    off += take;
    msgs.push_back(std::move(msg));
  }
  return msgs;
}

}  // namespace scramblesuit::framing
