// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run directly or through ctest.
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "scramblesuit/flowstats.hpp"
#include "scramblesuit/net.hpp"
#include "scramblesuit/session.hpp"

using namespace scramblesuit;

namespace {

int failures = 0;

#define REQUIRE_OR_FAIL(cond)                                             \
  do {                                                                    \
    if (!(cond)) {                                                        \
      std::fprintf(stderr, "  check failed at %s:%d: %s\n", __FILE__,     \
                   __LINE__, #cond);                                      \
      return false;                                                       \
    }                                                                     \
  } while (0)

void report(int number, const char* title, bool passed) {
  std::printf("criterion %2d %-24s %s\n", number, title,
              passed ? "PASS" : "FAIL");
  if (!passed) failures++;
}

Bytes flatten(const std::vector<session::WireSegment>& segments) {
  Bytes out;
  for (const auto& seg : segments)
    append(out, {seg.data.data(), seg.data.size()});
  return out;
}

constexpr std::int64_t kT0 = 1700000000;

session::ClockFn fixed_clock(std::int64_t t) {
  return [t] { return t; };
}

// Minimal TCP echo server used as the upstream behind the server proxy.
class EchoServer {
 public:
  bool start() {
    fd_ = net::tcp_listen("127.0.0.1", 0, &port_);
    if (fd_ < 0) return false;
    thread_ = std::thread([this] { loop(); });
    return true;
  }
  void stop() {
    stopping_ = true;
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    if (thread_.joinable()) thread_.join();
    for (auto& w : workers_)
      if (w.joinable()) w.join();
  }
  std::uint16_t port() const { return port_; }

 private:
  void loop() {
    while (!stopping_) {
      int conn = ::accept(fd_, nullptr, nullptr);
      if (conn < 0) break;
      workers_.emplace_back([conn] {
        std::uint8_t buf[65536];
        ssize_t n;
        while ((n = ::recv(conn, buf, sizeof(buf), 0)) > 0)
          if (!net::write_all(conn, {buf, static_cast<std::size_t>(n)})) break;
        ::close(conn);
      });
    }
  }
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
  std::vector<std::thread> workers_;
};

bool socks5_connect(int fd) {
  std::uint8_t greeting[3] = {5, 1, 0};
  if (!net::write_all(fd, {greeting, 3})) return false;
  std::uint8_t reply[2];
  if (::recv(fd, reply, 2, MSG_WAITALL) != 2 || reply[1] != 0) return false;
  std::uint8_t request[10] = {5, 1, 0, 1, 0, 0, 0, 0, 0, 0};
  if (!net::write_all(fd, {request, 10})) return false;
  std::uint8_t resp[10];
  if (::recv(fd, resp, 10, MSG_WAITALL) != 10 || resp[1] != 0) return false;
  return true;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("accept-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// --- 1: end-to-end integrity over the real proxies --------------------------

bool criterion_integrity() {
  auto started = std::chrono::steady_clock::now();

  EchoServer echo;
  REQUIRE_OR_FAIL(echo.start());
  Bytes secret = crypto::secure_random(20);

  net::ServerProxyConfig server_cfg;
  server_cfg.upstream_host = "127.0.0.1";
  server_cfg.upstream_port = echo.port();
  server_cfg.bridge_secret = secret;
  server_cfg.state_dir = scratch_dir("server");
  net::ServerProxy server(server_cfg);
  REQUIRE_OR_FAIL(server.start());

  net::ClientProxyConfig client_cfg;
  client_cfg.bridge = {"127.0.0.1", server.port(), secret};
  client_cfg.state_dir = scratch_dir("client");
  net::ClientProxy client(client_cfg);
  REQUIRE_OR_FAIL(client.start());

  bool ok = true;
  for (int seed = 0; seed < 5 && ok; seed++) {
    std::mt19937_64 gen(seed);
    Bytes payload(1000000);
    for (auto& b : payload) b = static_cast<std::uint8_t>(gen());

    int fd = net::tcp_connect("127.0.0.1", client.port());
    if (fd < 0 || !socks5_connect(fd)) {
      ok = false;
      break;
    }
    Bytes received;
    std::thread reader([&] {
      std::uint8_t buf[65536];
      while (received.size() < payload.size()) {
        ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
        if (n <= 0) break;
        received.insert(received.end(), buf, buf + n);
      }
    });
    ok = net::write_all(fd, {payload.data(), payload.size()});
    reader.join();
    ::close(fd);
    ok = ok && received == payload;
  }

  client.stop();
  server.stop();
  echo.stop();

  auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                     std::chrono::steady_clock::now() - started)
                     .count();
  REQUIRE_OR_FAIL(ok);
  REQUIRE_OR_FAIL(elapsed < 60);
  return true;
}

// --- 2: overhead band --------------------------------------------------------

bool criterion_overhead() {
  double sum = 0.0;
  for (std::uint32_t t = 0; t < 25; t++) {
    auto result = flowstats::run_flow_trial(1000000, flowstats::trial_seed(100, t));
    REQUIRE_OR_FAIL(result.payload_intact);
    REQUIRE_OR_FAIL(result.report.total_overhead >= 0.10);
    REQUIRE_OR_FAIL(result.report.total_overhead <= 0.60);
    sum += result.report.total_overhead;
  }
  double mean = sum / 25.0;
  std::fprintf(stderr, "  mean overhead: %.4f\n", mean);
  REQUIRE_OR_FAIL(mean >= 0.30);
  REQUIRE_OR_FAIL(mean <= 0.51);
  return true;
}

// --- 3: active-probe silence -------------------------------------------------

Bytes genuine_ticket_hello(session::ServerContext& ctx) {
  session::StoredTicket stored;
  stored.master = crypto::MasterKey::random();
  stored.issued_at = kT0;
  {
    std::lock_guard lock(ctx.mu);
    stored.ticket = handshake::issue_ticket(ctx.ticket_keys, stored.master, kT0);
  }
  session::ClientSession::Config cfg;
  cfg.bridge_secret = ctx.bridge_secret;
  cfg.ticket = stored;
  cfg.clock = ctx.clock;
  session::ClientSession probe_client(cfg);
  return flatten(probe_client.connect());
}

bool criterion_silence() {
  session::ServerContext ctx(crypto::secure_random(20), fixed_clock(kT0));
  std::mt19937 gen(303);

  for (int trial = 0; trial < 10000; trial++) {
    Bytes probe;
    switch (trial % 4) {
      case 0:  // pure random bytes
      case 1:
        probe = crypto::secure_random(gen() % 4097);
        break;
      case 2: {  // truncated genuine handshake
        Bytes hello = genuine_ticket_hello(ctx);
        probe.assign(hello.begin(), hello.begin() + gen() % hello.size());
        break;
      }
      case 3: {  // bit-flipped genuine handshake
        probe = genuine_ticket_hello(ctx);
        probe[gen() % probe.size()] ^=
            static_cast<std::uint8_t>(1 << (gen() % 8));
        break;
      }
    }
    session::ServerSession server(ctx);
    auto res = server.pump({probe.data(), probe.size()});
    REQUIRE_OR_FAIL(res.wire_out.empty());
    REQUIRE_OR_FAIL(res.app_data.empty());
    REQUIRE_OR_FAIL(!server.established());
  }

  // socket-level subset against a live server proxy
  EchoServer echo;
  REQUIRE_OR_FAIL(echo.start());
  net::ServerProxyConfig cfg;
  cfg.upstream_host = "127.0.0.1";
  cfg.upstream_port = echo.port();
  cfg.bridge_secret = crypto::secure_random(20);
  cfg.state_dir = scratch_dir("probe");
  cfg.idle_timeout_secs = 1;
  net::ServerProxy server(cfg);
  REQUIRE_OR_FAIL(server.start());

  std::atomic<int> responded{0};
  std::vector<std::thread> probes;
  for (int i = 0; i < 24; i++) {
    probes.emplace_back([&, i] {
      int fd = net::tcp_connect("127.0.0.1", server.port());
      if (fd < 0) {
        responded++;
        return;
      }
      Bytes junk = crypto::secure_random(64 * (i + 1));
      net::write_all(fd, {junk.data(), junk.size()});
      struct pollfd pfd{fd, POLLIN, 0};
      std::uint8_t buf[256];
      // wait past the idle timeout; the only acceptable event is EOF
      while (::poll(&pfd, 1, 3000) > 0) {
        ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
        if (n > 0) responded++;
        if (n <= 0) break;
      }
      ::close(fd);
    });
  }
  for (auto& t : probes) t.join();
  server.stop();
  echo.stop();
  REQUIRE_OR_FAIL(responded.load() == 0);
  return true;
}

// --- 4: replay rejection -----------------------------------------------------

bool criterion_replay() {
  session::ServerContext ctx(crypto::secure_random(20), fixed_clock(kT0));

  for (int trial = 0; trial < 100; trial++) {
    bool use_ticket = trial % 2 == 0;
    session::ClientSession::Config cfg;
    cfg.bridge_secret = ctx.bridge_secret;
    cfg.clock = ctx.clock;
    if (use_ticket) {
      session::StoredTicket stored;
      stored.master = crypto::MasterKey::random();
      stored.issued_at = kT0;
      {
        std::lock_guard lock(ctx.mu);
        stored.ticket =
            handshake::issue_ticket(ctx.ticket_keys, stored.master, kT0);
      }
      cfg.ticket = stored;
    }
    session::ClientSession client(cfg);
    Bytes hello = flatten(client.connect());

    {
      session::ServerSession first(ctx);
      auto res = first.pump({hello.data(), hello.size()});
      REQUIRE_OR_FAIL(first.established());
      REQUIRE_OR_FAIL(!res.wire_out.empty());
      // the session ends without a ticket ack; close() must arm the entry
    }

    // byte-identical replay in the same epoch hour: silent rejection
    session::ServerSession second(ctx);
    auto replayed = second.pump({hello.data(), hello.size()});
    REQUIRE_OR_FAIL(!second.established());
    REQUIRE_OR_FAIL(replayed.wire_out.empty());
    REQUIRE_OR_FAIL(replayed.app_data.empty());
  }

  // replays landing after the epoch window fail the MAC scan outright
  session::ServerContext late_ctx(ctx.bridge_secret, fixed_clock(kT0));
  session::ClientSession::Config cfg;
  cfg.bridge_secret = ctx.bridge_secret;
  cfg.clock = fixed_clock(kT0);
  session::ClientSession client(cfg);
  Bytes hello = flatten(client.connect());
  {
    session::ServerSession first(late_ctx);
    first.pump({hello.data(), hello.size()});
    REQUIRE_OR_FAIL(first.established());
  }
  session::ServerContext shifted(ctx.bridge_secret, fixed_clock(kT0 + 3 * 3600));
  {
    std::lock_guard lock(late_ctx.mu);
    std::lock_guard lock2(shifted.mu);
    shifted.ticket_keys = late_ctx.ticket_keys;
  }
  session::ServerSession late(shifted);
  auto res = late.pump({hello.data(), hello.size()});
  REQUIRE_OR_FAIL(!late.established());
  REQUIRE_OR_FAIL(res.wire_out.empty());
  return true;
}

// --- 5: ticket lifetime under a mock clock ----------------------------------

bool criterion_ticket_lifetime() {
  constexpr std::int64_t kDay = 24 * 3600;
  auto store = handshake::TicketKeyStore::generate(kT0);
  auto master = crypto::MasterKey::random();
  auto ticket = handshake::issue_ticket(store, master, kT0);

  REQUIRE_OR_FAIL(handshake::redeem_ticket(store, ticket.span(), kT0).has_value());
  REQUIRE_OR_FAIL(
      handshake::redeem_ticket(store, ticket.span(), kT0 + 7 * kDay - 1)
          .has_value());
  REQUIRE_OR_FAIL(
      !handshake::redeem_ticket(store, ticket.span(), kT0 + 7 * kDay));

  // rotation happens exactly at the 7-day boundary
  handshake::rotate_if_due(store, kT0 + 7 * kDay - 1);
  REQUIRE_OR_FAIL(!store.superseded.has_value());
  handshake::rotate_if_due(store, kT0 + 7 * kDay);
  REQUIRE_OR_FAIL(store.superseded.has_value());
  REQUIRE_OR_FAIL(store.current.created_at == kT0 + 7 * kDay);

  // a late ticket from the old pair redeems through the superseded path
  auto late_ticket = handshake::issue_ticket(
      handshake::TicketKeyStore{*store.superseded, std::nullopt}, master,
      kT0 + 6 * kDay);
  auto redeemed = handshake::redeem_ticket(store, late_ticket.span(),
                                           kT0 + 7 * kDay + 3600);
  REQUIRE_OR_FAIL(redeemed.has_value());
  REQUIRE_OR_FAIL(*redeemed == master);
  return true;
}

// --- 6: UniformDH agreement --------------------------------------------------

bool criterion_uniformdh() {
  for (int i = 0; i < 100; i++) {
    handshake::UniformDhKeypair alice;
    if (i % 2 == 0) {
      alice = handshake::uniformdh_keypair();
    } else {
      Bytes x = crypto::secure_random(192);
      x[191] &= 0xfe;
      alice = handshake::uniformdh_keypair_from({x.data(), x.size()}, true);
    }
    auto bob = handshake::uniformdh_keypair();
    REQUIRE_OR_FAIL(alice.public_wire.size() == 192);
    REQUIRE_OR_FAIL(bob.public_wire.size() == 192);
    auto ka = handshake::uniformdh_shared(alice, bob.wire_span());
    auto kb = handshake::uniformdh_shared(bob, alice.wire_span());
    REQUIRE_OR_FAIL(ka.has_value() && kb.has_value());
    REQUIRE_OR_FAIL(*ka == *kb);
    REQUIRE_OR_FAIL(ka->bytes.size() == 32);
  }
  return true;
}

// --- 7: crypto against independent implementations ---------------------------

bool criterion_crypto_oracles() {
  for (int i = 0; i < 10; i++) {
    Bytes key = crypto::secure_random(32);
    Bytes msg = crypto::secure_random(1 + i * 37);
    REQUIRE_OR_FAIL(crypto::hmac_sha256({key.data(), key.size()},
                                        {msg.data(), msg.size()}) ==
                    oracle::hmac_sha256({key.data(), key.size()},
                                        {msg.data(), msg.size()}));

    Bytes ikm = crypto::secure_random(32);
    Bytes info = crypto::secure_random(10);
    REQUIRE_OR_FAIL(crypto::hkdf_sha256({ikm.data(), ikm.size()}, {},
                                        {info.data(), info.size()}, 160) ==
                    oracle::hkdf_sha256({ikm.data(), ikm.size()}, {},
                                        {info.data(), info.size()}, 160));

    Bytes nonce = crypto::secure_random(16);
    Bytes plain = crypto::secure_random(4096);
    crypto::StreamCipher cipher({key.data(), key.size()},
                                {nonce.data(), nonce.size()});
    REQUIRE_OR_FAIL(cipher.process({plain.data(), plain.size()}) ==
                    oracle::aes256_ctr({key.data(), key.size()},
                                       {nonce.data(), nonce.size()},
                                       {plain.data(), plain.size()}));
  }
  return true;
}

// --- 8: shape polymorphism ---------------------------------------------------

bool criterion_polymorphism() {
  std::vector<std::vector<double>> c2s, s2c;
  for (std::uint32_t t = 0; t < 101; t++) {
    auto result = flowstats::run_flow_trial(1000000, flowstats::trial_seed(8000, t));
    REQUIRE_OR_FAIL(result.payload_intact);
    c2s.push_back(result.trace.lengths(flowstats::Direction::C2S));
    s2c.push_back(result.trace.lengths(flowstats::Direction::S2C));
  }
  int rejected = 0;
  for (std::size_t i = 0; i + 1 < c2s.size(); i++) {
    bool up = flowstats::ks_two_sample(c2s[i], c2s[i + 1], 0.05).reject;
    bool down = flowstats::ks_two_sample(s2c[i], s2c[i + 1], 0.05).reject;
    if (up && down) rejected++;
  }
  std::fprintf(stderr, "  pairs rejected: %d/100\n", rejected);
  REQUIRE_OR_FAIL(rejected >= 90);
  return true;
}

// --- 9: delay bounds ---------------------------------------------------------

bool criterion_delays() {
  morphing::Prng rng;
  for (int trial = 0; trial < 100; trial++) {
    auto dist = morphing::generate_distribution(morphing::Kind::Delay, rng);
    double mean = 0.0;
    for (const auto& bin : dist.bins) mean += bin.value * bin.probability;
    REQUIRE_OR_FAIL(mean < morphing::kMaxDelayMs);
    for (int i = 0; i < 1000; i++)
      REQUIRE_OR_FAIL(morphing::next_delay(dist, rng) < morphing::kMaxDelayMs);
  }

  // delays attached to real session output obey the same bound
  session::ServerContext ctx(crypto::secure_random(20), fixed_clock(kT0));
  session::ClientSession::Config cfg;
  cfg.bridge_secret = ctx.bridge_secret;
  cfg.clock = ctx.clock;
  session::ClientSession client(cfg);
  session::ServerSession server(ctx);
  auto hello = flatten(client.connect());
  auto sres = server.pump({hello.data(), hello.size()});
  Bytes reply = flatten(sres.wire_out);
  client.pump({reply.data(), reply.size()});
  Bytes data = crypto::secure_random(200000);
  for (const auto& seg : client.send_app({data.data(), data.size()}))
    REQUIRE_OR_FAIL(seg.delay_ms < morphing::kMaxDelayMs);
  for (const auto& seg : server.send_app({data.data(), data.size()}))
    REQUIRE_OR_FAIL(seg.delay_ms < morphing::kMaxDelayMs);
  return true;
}

// --- 10: wire uniformity ------------------------------------------------------

bool criterion_wire_uniformity() {
  std::vector<Bytes> sessions;
  Bytes concatenated;
  for (int i = 0; i < 100; i++) {
    session::ServerContext ctx(crypto::secure_random(20), fixed_clock(kT0));
    session::ClientSession::Config cfg;
    cfg.bridge_secret = ctx.bridge_secret;
    cfg.clock = ctx.clock;
    session::ClientSession client(cfg);
    session::ServerSession server(ctx);

    Bytes wire = flatten(client.connect());
    auto sres = server.pump({wire.data(), wire.size()});
    Bytes reply = flatten(sres.wire_out);
    auto cres = client.pump({reply.data(), reply.size()});
    append(wire, flatten(cres.wire_out));
    Bytes data(12000, 0x00);  // worst case: constant plaintext
    append(wire, flatten(client.send_app({data.data(), data.size()})));

    REQUIRE_OR_FAIL(wire.size() >= 1024);
    sessions.push_back(wire);
    append(concatenated, {wire.data(), wire.size()});
  }

  for (std::size_t off = 0; off < 1024; off++) {
    bool constant = true;
    for (std::size_t i = 1; i < sessions.size(); i++)
      if (sessions[i][off] != sessions[0][off]) constant = false;
    REQUIRE_OR_FAIL(!constant);
  }

  REQUIRE_OR_FAIL(concatenated.size() >= 1000000);
  concatenated.resize(1000000);
  double chi =
      oracle::byte_chi_square({concatenated.data(), concatenated.size()});
  std::fprintf(stderr, "  chi-square: %.2f (bound %.2f)\n", chi,
               oracle::kChiSquare255Alpha001);
  REQUIRE_OR_FAIL(chi < oracle::kChiSquare255Alpha001);
  return true;
}

// --- 11: statistical kernel ---------------------------------------------------

bool criterion_ks_kernel() {
  std::mt19937 gen(505);
  std::uniform_real_distribution<double> u(0.0, 1500.0);
  for (int trial = 0; trial < 100; trial++) {
    std::vector<double> a, b;
    std::size_t na = 2 + gen() % 999, nb = 2 + gen() % 999;
    for (std::size_t i = 0; i < na; i++) a.push_back(std::round(u(gen)));
    for (std::size_t i = 0; i < nb; i++) b.push_back(std::round(u(gen)));
    auto r = flowstats::ks_two_sample(a, b, 0.05);
    REQUIRE_OR_FAIL(std::abs(r.statistic - oracle::ks_statistic_brute(a, b)) <=
                    1e-12);
  }
  return true;
}

}  // namespace

int main() {
  report(1, "end-to-end integrity", criterion_integrity());
  report(2, "overhead band", criterion_overhead());
  report(3, "active-probe silence", criterion_silence());
  report(4, "replay rejection", criterion_replay());
  report(5, "ticket lifetime", criterion_ticket_lifetime());
  report(6, "key agreement", criterion_uniformdh());
  report(7, "crypto oracles", criterion_crypto_oracles());
  report(8, "shape polymorphism", criterion_polymorphism());
  report(9, "delay bounds", criterion_delays());
  report(10, "wire uniformity", criterion_wire_uniformity());
  report(11, "statistical kernel", criterion_ks_kernel());

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 11 criteria passed\n");
  return 0;
}
