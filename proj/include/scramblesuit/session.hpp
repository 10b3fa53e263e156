#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include "scramblesuit/framing.hpp"
#include "scramblesuit/handshake.hpp"
#include "scramblesuit/morphing.hpp"

namespace scramblesuit::session {

using ClockFn = std::function<std::int64_t()>;

ClockFn system_clock();

/// One outbound wire write and the sleep that precedes it.
struct WireSegment {
  std::uint32_t delay_ms = 0;
  Bytes data;
};

struct PumpResult {
  Bytes app_data;
  std::vector<WireSegment> wire_out;
};

struct StoredTicket {
  crypto::MasterKey master;
  handshake::SessionTicket ticket;
  std::int64_t issued_at = 0;
};

/// State shared by all server connections: ticket keys, the replay cache and
/// the bridge secret. Lock `mu` around any access.
struct ServerContext {
  std::mutex mu;
  handshake::TicketKeyStore ticket_keys;
  handshake::ReplayCache replay;
  Bytes bridge_secret;
  ClockFn clock;

  ServerContext(Bytes secret, ClockFn clk);

  /// MAC key for UniformDH handshakes, derived from the bridge secret.
  std::array<std::uint8_t, 32> kb_mac_key() const;
};

enum class Phase {
  AwaitHandshake,   // server: scanning; client (UniformDH): awaiting reply
  AwaitNewTicket,   // keys derived, client may already send data
  Established,
  Poisoned,
};

class ClientSession {
 public:
  struct Config {
    Bytes bridge_secret;
    std::optional<StoredTicket> ticket;   // preferred over UniformDH
    std::optional<Bytes> morph_seed;      // 32 bytes, deterministic morphing
    ClockFn clock = system_clock();
  };

  explicit ClientSession(Config config);

  /// Initial handshake bytes. Call once.
  std::vector<WireSegment> connect();

  PumpResult pump(ByteSpan wire_in);
  std::vector<WireSegment> send_app(ByteSpan data);

  Phase phase() const { return phase_; }
  bool poisoned() const { return phase_ == Phase::Poisoned; }

  /// The ticket issued by the server during this session, once received.
  const std::optional<StoredTicket>& fresh_ticket() const {
    return fresh_ticket_;
  }

 private:
  std::vector<WireSegment> frame_out(ByteSpan data);
  void poison();

  Config config_;
  Phase phase_ = Phase::AwaitHandshake;
  morphing::Prng prng_;
  morphing::MorphDistribution length_dist_;
  morphing::MorphDistribution delay_dist_;
  std::optional<handshake::UniformDhKeypair> dh_;
  handshake::ReplayCache scratch_replay_;
  Bytes hs_buf_;
  std::optional<framing::FrameCodec> codec_;
  std::optional<StoredTicket> fresh_ticket_;
  bool ack_pending_ = false;
  Bytes early_app_;  // queued before the UniformDH reply arrives
};

class ServerSession {
 public:
  ServerSession(ServerContext& ctx,
                std::optional<Bytes> morph_seed = std::nullopt);
  ~ServerSession();

  PumpResult pump(ByteSpan wire_in);
  std::vector<WireSegment> send_app(ByteSpan data);

  /// Arm the pending replay entry if the ack never arrived (fail closed).
  void close();

  Phase phase() const { return phase_; }
  bool established() const {
    return phase_ == Phase::AwaitNewTicket || phase_ == Phase::Established;
  }
  bool poisoned() const { return phase_ == Phase::Poisoned; }

 private:
  void bootstrap(const crypto::MasterKey& master, ByteSpan replay_key,
                 std::vector<WireSegment>& out);
  std::vector<WireSegment> frame_out(ByteSpan data);
  void poison();

  ServerContext& ctx_;
  Phase phase_ = Phase::AwaitHandshake;
  morphing::Prng prng_;
  morphing::MorphDistribution length_dist_;
  morphing::MorphDistribution delay_dist_;
  Bytes hs_buf_;
  std::optional<framing::FrameCodec> codec_;
  std::array<std::uint8_t, 32> pending_replay_key_{};
  bool replay_pending_ = false;
  bool closed_ = false;
};

/// Client-side persistent ticket store, one record per bridge.
class TicketJar {
 public:
  explicit TicketJar(std::filesystem::path path);

  std::optional<StoredTicket> take(const std::string& bridge_id);
  void put(const std::string& bridge_id, const StoredTicket& ticket);
  std::size_t size() const { return records_.size(); }

 private:
  void load();
  void save() const;

  std::filesystem::path path_;
  std::vector<std::pair<std::string, StoredTicket>> records_;
};

bool save_ticket_keys(const handshake::TicketKeyStore& store,
                      const std::filesystem::path& path);
std::optional<handshake::TicketKeyStore> load_ticket_keys(
    const std::filesystem::path& path);

}  // namespace scramblesuit::session
