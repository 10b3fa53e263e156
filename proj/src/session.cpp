#include "scramblesuit/session.hpp"

#include <sys/stat.h>

#include <cstring>
#include <ctime>
#include <fstream>

namespace scramblesuit::session {

namespace {

std::array<std::uint8_t, 32> derive_kb_mac_key(ByteSpan bridge_secret) {
  Bytes digest = crypto::sha256(bridge_secret);
  std::array<std::uint8_t, 32> key;
  std::memcpy(key.data(), digest.data(), 32);
  return key;
}

morphing::MorphDistribution make_dist(morphing::Kind kind,
                                      morphing::Prng& prng) {
  return morphing::generate_distribution(kind, prng);
}

morphing::Prng make_prng(const std::optional<Bytes>& seed) {
  if (seed) return morphing::Prng({seed->data(), seed->size()});
  return morphing::Prng();
}

void restrict_permissions(const std::filesystem::path& path) {
  ::chmod(path.c_str(), S_IRUSR | S_IWUSR);
}

}  // namespace

ClockFn system_clock() {
  return [] { return static_cast<std::int64_t>(::time(nullptr)); };
}

ServerContext::ServerContext(Bytes secret, ClockFn clk)
    : ticket_keys(handshake::TicketKeyStore::generate(clk())),
      bridge_secret(std::move(secret)),
      clock(std::move(clk)) {}

std::array<std::uint8_t, 32> ServerContext::kb_mac_key() const {
  return derive_kb_mac_key({bridge_secret.data(), bridge_secret.size()});
}

// --- ClientSession ---------------------------------------------------------

ClientSession::ClientSession(Config config)
    : config_(std::move(config)),
      prng_(make_prng(config_.morph_seed)),
      length_dist_(make_dist(morphing::Kind::Length, prng_)),
      delay_dist_(make_dist(morphing::Kind::Delay, prng_)) {}

void ClientSession::poison() {
  phase_ = Phase::Poisoned;
  codec_.reset();
}

std::vector<WireSegment> ClientSession::connect() {
  std::int64_t now = config_.clock();
  auto epoch = handshake::Epoch::from_unix(now);
  std::uint32_t pad = morphing::handshake_pad_len(length_dist_, prng_);

  Bytes hs;
  if (config_.ticket) {
    hs = handshake::build_ticket_handshake(config_.ticket->master,
                                           config_.ticket->ticket, pad, epoch);
    codec_.emplace(
        crypto::derive_session_keys(config_.ticket->master,
                                    crypto::Role::Client));
    phase_ = Phase::AwaitNewTicket;
  } else {
    dh_ = handshake::uniformdh_keypair();
    auto kb = derive_kb_mac_key(
        {config_.bridge_secret.data(), config_.bridge_secret.size()});
    hs = handshake::build_uniformdh_handshake({kb.data(), kb.size()}, *dh_,
                                              pad, epoch);
  }
  return {{morphing::next_delay(delay_dist_, prng_), std::move(hs)}};
}

std::vector<WireSegment> ClientSession::frame_out(ByteSpan data) {
  auto targets = morphing::morph_lengths(length_dist_, data.size(), prng_);
  auto msgs = framing::make_data_messages(data, targets);
  if (ack_pending_) {
    if (msgs.empty()) {
      framing::ProtocolMessage ack;
      ack.flags = framing::flags::kTicketAck;
      ack.payload.clear();
      ack.padding_len = static_cast<std::uint16_t>(
          morphing::sample(length_dist_, prng_));
      msgs.push_back(std::move(ack));
    } else {
      msgs.front().flags |= framing::flags::kTicketAck;
    }
    ack_pending_ = false;
  }

  std::vector<WireSegment> out;
  for (std::size_t i = 0; i < msgs.size(); i++) {
    WireSegment seg;
    seg.delay_ms = (i == 0) ? morphing::next_delay(delay_dist_, prng_) : 0;
    seg.data = codec_->encode(msgs[i]);
    out.push_back(std::move(seg));
  }
  return out;
}

PumpResult ClientSession::pump(ByteSpan wire_in) {
  PumpResult result;
  if (poisoned()) return result;

  ByteSpan framed = wire_in;
  Bytes leftover;
  if (phase_ == Phase::AwaitHandshake) {
    append(hs_buf_, wire_in);
    auto kb = derive_kb_mac_key(
        {config_.bridge_secret.data(), config_.bridge_secret.size()});
    auto scan = handshake::scan_uniformdh_handshake(
        {kb.data(), kb.size()}, scratch_replay_,
        {hs_buf_.data(), hs_buf_.size()}, config_.clock());
    if (std::holds_alternative<handshake::NeedMoreData>(scan)) return result;
    if (std::holds_alternative<handshake::Reject>(scan)) {
      poison();
      return result;
    }
    const auto& acc = std::get<handshake::UniformDhAccepted>(scan);
    auto master = handshake::uniformdh_shared(
        *dh_, {acc.peer_public.data(), acc.peer_public.size()});
    if (!master) {
      poison();
      return result;
    }
    codec_.emplace(crypto::derive_session_keys(*master, crypto::Role::Client));
    phase_ = Phase::AwaitNewTicket;
    leftover.assign(hs_buf_.begin() + acc.consumed, hs_buf_.end());
    hs_buf_.clear();
    framed = {leftover.data(), leftover.size()};
  }

  if (!codec_) return result;
  auto msgs = codec_->decode_stream(framed);
  if (codec_->poisoned()) {
    poison();
    return result;
  }
  for (const auto& msg : msgs) {
    if (msg.flags & framing::flags::kNewTicket) {
      StoredTicket fresh;
      fresh.master = crypto::MasterKey::from_bytes({msg.payload.data(), 32});
      std::memcpy(fresh.ticket.blob.data(), msg.payload.data() + 32,
                  handshake::kTicketLen);
      fresh.issued_at = config_.clock();
      fresh_ticket_ = fresh;
      ack_pending_ = true;
      phase_ = Phase::Established;
    }
    if (msg.flags & framing::flags::kPayload) {
      append(result.app_data, {msg.payload.data(), msg.payload.size()});
    }
  }
  if (!early_app_.empty() || ack_pending_) {
    // queued early data rides along; the first message picks up the ack flag
    Bytes queued;
    queued.swap(early_app_);
    auto segs = frame_out({queued.data(), queued.size()});
    result.wire_out.insert(result.wire_out.end(),
                           std::make_move_iterator(segs.begin()),
                           std::make_move_iterator(segs.end()));
  }
  return result;
}

std::vector<WireSegment> ClientSession::send_app(ByteSpan data) {
  if (poisoned()) return {};
  if (phase_ == Phase::AwaitHandshake) {
    append(early_app_, data);
    return {};
  }
  if (data.empty() && !ack_pending_) return {};
  return frame_out(data);
}

// --- ServerSession ---------------------------------------------------------

ServerSession::ServerSession(ServerContext& ctx, std::optional<Bytes> seed)
    : ctx_(ctx),
      prng_(make_prng(seed)),
      length_dist_(make_dist(morphing::Kind::Length, prng_)),
      delay_dist_(make_dist(morphing::Kind::Delay, prng_)) {}

ServerSession::~ServerSession() { close(); }

void ServerSession::poison() {
  phase_ = Phase::Poisoned;
  codec_.reset();
}

void ServerSession::bootstrap(const crypto::MasterKey& master,
                              ByteSpan replay_key,
                              std::vector<WireSegment>& out) {
  std::int64_t now = ctx_.clock();
  codec_.emplace(crypto::derive_session_keys(master, crypto::Role::Server));

  crypto::MasterKey next_master = crypto::MasterKey::random();
  handshake::SessionTicket ticket;
  {
    std::scoped_lock lock(ctx_.mu);
    ticket = handshake::issue_ticket(ctx_.ticket_keys, next_master, now);
  }

  framing::ProtocolMessage msg;
  msg.flags = framing::flags::kNewTicket;
  append(msg.payload, next_master.span());
  append(msg.payload, ticket.span());
  std::uint32_t target = morphing::sample(length_dist_, prng_);
  if (target > framing::kNewTicketPayloadLen)
    msg.padding_len =
        static_cast<std::uint16_t>(target - framing::kNewTicketPayloadLen);

  WireSegment seg;
  seg.delay_ms = morphing::next_delay(delay_dist_, prng_);
  seg.data = codec_->encode(msg);
  out.push_back(std::move(seg));

  std::memset(pending_replay_key_.data(), 0, pending_replay_key_.size());
  std::memcpy(pending_replay_key_.data(), replay_key.data(),
              std::min<std::size_t>(replay_key.size(),
                                    pending_replay_key_.size()));
  replay_pending_ = true;
  phase_ = Phase::AwaitNewTicket;
}

PumpResult ServerSession::pump(ByteSpan wire_in) {
  PumpResult result;
  if (poisoned()) return result;

  ByteSpan framed = wire_in;
  Bytes leftover;
  if (phase_ == Phase::AwaitHandshake) {
    append(hs_buf_, wire_in);
    std::int64_t now = ctx_.clock();

    handshake::TicketScanResult ticket_scan;
    handshake::UniformDhScanResult dh_scan;
    auto kb = ctx_.kb_mac_key();
    {
      std::scoped_lock lock(ctx_.mu);
      handshake::rotate_if_due(ctx_.ticket_keys, now);
      ticket_scan = handshake::scan_ticket_handshake(
          ctx_.ticket_keys, ctx_.replay, {hs_buf_.data(), hs_buf_.size()},
          now);
      dh_scan = handshake::scan_uniformdh_handshake(
          {kb.data(), kb.size()}, ctx_.replay,
          {hs_buf_.data(), hs_buf_.size()}, now);
    }

    if (auto* acc = std::get_if<handshake::TicketAccepted>(&ticket_scan)) {
      leftover.assign(hs_buf_.begin() + acc->consumed, hs_buf_.end());
      hs_buf_.clear();
      bootstrap(acc->master, acc->master.span(), result.wire_out);
      framed = {leftover.data(), leftover.size()};
    } else if (auto* dh = std::get_if<handshake::UniformDhAccepted>(&dh_scan)) {
      auto own = handshake::uniformdh_keypair();
      auto master = handshake::uniformdh_shared(
          own, {dh->peer_public.data(), dh->peer_public.size()});
      if (!master) {
        poison();
        return result;
      }
      std::uint32_t pad = morphing::handshake_pad_len(length_dist_, prng_);
      WireSegment reply;
      reply.delay_ms = morphing::next_delay(delay_dist_, prng_);
      reply.data = handshake::build_uniformdh_handshake(
          {kb.data(), kb.size()}, own, pad, handshake::Epoch::from_unix(now));
      result.wire_out.push_back(std::move(reply));

      leftover.assign(hs_buf_.begin() + dh->consumed, hs_buf_.end());
      hs_buf_.clear();
      bootstrap(*master, {dh->mac_tag.data(), dh->mac_tag.size()},
                result.wire_out);
      framed = {leftover.data(), leftover.size()};
    } else if (std::holds_alternative<handshake::Reject>(ticket_scan) &&
               std::holds_alternative<handshake::Reject>(dh_scan)) {
      poison();
      return result;
    } else {
      return result;  // need more data
    }
  }

  if (!codec_) return result;
  auto msgs = codec_->decode_stream(framed);
  if (codec_->poisoned()) {
    poison();
    return result;
  }
  for (const auto& msg : msgs) {
    if (msg.flags & framing::flags::kTicketAck) {
      if (replay_pending_) {
        std::scoped_lock lock(ctx_.mu);
        ctx_.replay.insert(
            {pending_replay_key_.data(), pending_replay_key_.size()},
            ctx_.clock());
        replay_pending_ = false;
      }
      phase_ = Phase::Established;
    }
    if (msg.flags & framing::flags::kPayload) {
      append(result.app_data, {msg.payload.data(), msg.payload.size()});
    }
  }
  return result;
}

std::vector<WireSegment> ServerSession::send_app(ByteSpan data) {
  if (poisoned() || !codec_ || data.empty()) return {};
  auto targets = morphing::morph_lengths(length_dist_, data.size(), prng_);
  auto msgs = framing::make_data_messages(data, targets);
  std::vector<WireSegment> out;
  for (std::size_t i = 0; i < msgs.size(); i++) {
    WireSegment seg;
    seg.delay_ms = (i == 0) ? morphing::next_delay(delay_dist_, prng_) : 0;
    seg.data = codec_->encode(msgs[i]);
    out.push_back(std::move(seg));
  }
  return out;
}

void ServerSession::close() {
  if (closed_) return;
  closed_ = true;
  if (replay_pending_) {
    std::scoped_lock lock(ctx_.mu);
    ctx_.replay.insert({pending_replay_key_.data(), pending_replay_key_.size()},
                       ctx_.clock());
    replay_pending_ = false;
  }
}

// --- persistence -----------------------------------------------------------

namespace {

constexpr char kJarMagic[4] = {'S', 'S', 'T', 'J'};
constexpr char kKeysMagic[4] = {'S', 'S', 'T', 'K'};
constexpr std::uint8_t kFormatVersion = 1;

}  // namespace

TicketJar::TicketJar(std::filesystem::path path) : path_(std::move(path)) {
  load();
}

void TicketJar::load() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  char magic[4];
  std::uint8_t version = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 1);
  if (!in || std::memcmp(magic, kJarMagic, 4) != 0 ||
      version != kFormatVersion)
    return;
  while (true) {
    std::uint8_t len_buf[2];
    in.read(reinterpret_cast<char*>(len_buf), 2);
    if (!in) break;
    std::string id(get_u16be(len_buf), '\0');
    in.read(id.data(), static_cast<std::streamsize>(id.size()));
    StoredTicket t;
    in.read(reinterpret_cast<char*>(t.master.bytes.data()), 32);
    in.read(reinterpret_cast<char*>(t.ticket.blob.data()),
            handshake::kTicketLen);
    std::uint8_t ts[8];
    in.read(reinterpret_cast<char*>(ts), 8);
    if (!in) break;
    t.issued_at = static_cast<std::int64_t>(get_u64be(ts));
    records_.emplace_back(std::move(id), t);
  }
}

void TicketJar::save() const {
  std::filesystem::path tmp = path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(kJarMagic, 4);
    out.write(reinterpret_cast<const char*>(&kFormatVersion), 1);
    for (const auto& [id, t] : records_) {
      Bytes rec;
      put_u16be(rec, static_cast<std::uint16_t>(id.size()));
      append(rec, {reinterpret_cast<const std::uint8_t*>(id.data()),
                   id.size()});
      append(rec, t.master.span());
      append(rec, t.ticket.span());
      put_u64be(rec, static_cast<std::uint64_t>(t.issued_at));
      out.write(reinterpret_cast<const char*>(rec.data()),
                static_cast<std::streamsize>(rec.size()));
    }
  }
  restrict_permissions(tmp);
  std::filesystem::rename(tmp, path_);
}

std::optional<StoredTicket> TicketJar::take(const std::string& bridge_id) {
  for (auto it = records_.begin(); it != records_.end(); ++it) {
    if (it->first == bridge_id) {
      StoredTicket t = it->second;
      records_.erase(it);  // a ticket is single use
      save();
      return t;
    }
  }
  return std::nullopt;
}

void TicketJar::put(const std::string& bridge_id, const StoredTicket& ticket) {
  for (auto& [id, t] : records_) {
    if (id == bridge_id) {
      t = ticket;
      save();
      return;
    }
  }
  records_.emplace_back(bridge_id, ticket);
  save();
}

bool save_ticket_keys(const handshake::TicketKeyStore& store,
                      const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return false;
    out.write(kKeysMagic, 4);
    out.write(reinterpret_cast<const char*>(&kFormatVersion), 1);
    auto write_pair = [&out](const handshake::TicketKeyPair& pair) {
      Bytes rec;
      append(rec, {pair.enc_key.data(), pair.enc_key.size()});
      append(rec, {pair.mac_key.data(), pair.mac_key.size()});
      put_u64be(rec, static_cast<std::uint64_t>(pair.created_at));
      out.write(reinterpret_cast<const char*>(rec.data()),
                static_cast<std::streamsize>(rec.size()));
    };
    write_pair(store.current);
    std::uint8_t has_superseded = store.superseded ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&has_superseded), 1);
    if (store.superseded) write_pair(*store.superseded);
    if (!out) return false;
  }
  restrict_permissions(tmp);
  std::filesystem::rename(tmp, path);
  return true;
}

std::optional<handshake::TicketKeyStore> load_ticket_keys(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  std::uint8_t version = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 1);
  if (!in || std::memcmp(magic, kKeysMagic, 4) != 0 ||
      version != kFormatVersion)
    return std::nullopt;
  auto read_pair = [&in]() -> std::optional<handshake::TicketKeyPair> {
    handshake::TicketKeyPair pair;
    in.read(reinterpret_cast<char*>(pair.enc_key.data()), 32);
    in.read(reinterpret_cast<char*>(pair.mac_key.data()), 32);
    std::uint8_t ts[8];
    in.read(reinterpret_cast<char*>(ts), 8);
    if (!in) return std::nullopt;
    pair.created_at = static_cast<std::int64_t>(get_u64be(ts));
    return pair;
  };
  auto current = read_pair();
  if (!current) return std::nullopt;
  handshake::TicketKeyStore store{*current, std::nullopt};
  std::uint8_t has_superseded = 0;
  in.read(reinterpret_cast<char*>(&has_superseded), 1);
  if (in && has_superseded) store.superseded = read_pair();
  return store;
}

}  // namespace scramblesuit::session
