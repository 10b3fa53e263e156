#pragma once

#include <atomic>
#include <memory>
#include <thread>

#include "scramblesuit/descriptor.hpp"
#include "scramblesuit/session.hpp"

namespace scramblesuit::net {

struct ClientProxyConfig {
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 0;  // 0 picks an ephemeral port
  descriptor::BridgeDescriptor bridge;
  std::filesystem::path state_dir;
  std::optional<Bytes> morph_seed;
  int idle_timeout_secs = 30;
};

struct ServerProxyConfig {
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 0;
  std::string upstream_host;
  std::uint16_t upstream_port = 0;
  Bytes bridge_secret;
  std::filesystem::path state_dir;
  int idle_timeout_secs = 30;
};

/// Local SOCKS5 listener relaying each connection over a ScrambleSuit
/// session to the configured bridge.
class ClientProxy {
 public:
  explicit ClientProxy(ClientProxyConfig config);
  ~ClientProxy();

  bool start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void accept_loop();
  void handle_connection(int local_fd);

  ClientProxyConfig config_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  std::unique_ptr<session::TicketJar> jar_;
  std::mutex jar_mu_;
};

/// ScrambleSuit server: scans handshakes, stays silent towards anything
/// unauthenticated and relays authenticated sessions to the upstream.
class ServerProxy {
 public:
  explicit ServerProxy(ServerProxyConfig config);
  ~ServerProxy();

  bool start();
  void stop();
  std::uint16_t port() const { return port_; }

  session::ServerContext& context() { return *ctx_; }

 private:
  void accept_loop();
  void handle_connection(int client_fd);
  void persist_keys();

  ServerProxyConfig config_;
  std::unique_ptr<session::ServerContext> ctx_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

// low-level helpers shared by the proxies and tests
int tcp_listen(const std::string& host, std::uint16_t port,
               std::uint16_t* bound_port);
int tcp_connect(const std::string& host, std::uint16_t port);
bool write_all(int fd, ByteSpan data);
void write_segments(int fd, const std::vector<session::WireSegment>& segments);

}  // namespace scramblesuit::net
