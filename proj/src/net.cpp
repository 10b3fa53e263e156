#include "scramblesuit/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

namespace scramblesuit::net {

namespace {

constexpr std::size_t kReadChunk = 65536;

void sleep_ms(std::uint32_t ms) {
  if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

ssize_t read_some(int fd, Bytes& buf) {
  buf.resize(kReadChunk);
  ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
  buf.resize(n > 0 ? static_cast<std::size_t>(n) : 0);
  return n;
}

/// Minimal SOCKS5 server side: no-auth negotiation plus a CONNECT request.
/// The requested destination is ignored; the bridge from the configuration
/// is the only place this proxy connects to.
bool socks5_accept(int fd) {
  std::uint8_t hdr[2];
  if (::recv(fd, hdr, 2, MSG_WAITALL) != 2 || hdr[0] != 5) return false;
  std::uint8_t methods[255];
  if (hdr[1] == 0 || ::recv(fd, methods, hdr[1], MSG_WAITALL) != hdr[1])
    return false;
  const std::uint8_t method_reply[2] = {5, 0};
  if (!write_all(fd, {method_reply, 2})) return false;

  std::uint8_t req[4];
  if (::recv(fd, req, 4, MSG_WAITALL) != 4 || req[0] != 5 || req[1] != 1)
    return false;
  std::size_t addr_len;
  switch (req[3]) {
    case 1: addr_len = 4; break;
    case 4: addr_len = 16; break;
    case 3: {
      std::uint8_t n;
      if (::recv(fd, &n, 1, MSG_WAITALL) != 1) return false;
      addr_len = n;
      break;
    }
    default: return false;
  }
  std::uint8_t skip[256];
  if (::recv(fd, skip, addr_len + 2, MSG_WAITALL) !=
      static_cast<ssize_t>(addr_len + 2))
    return false;
  return true;
}

bool socks5_reply(int fd, bool ok) {
  const std::uint8_t reply[10] = {5, static_cast<std::uint8_t>(ok ? 0 : 4),
                                  0, 1, 0, 0, 0, 0, 0, 0};
  return write_all(fd, {reply, 10});
}

}  // namespace

int tcp_listen(const std::string& host, std::uint16_t port,
               std::uint16_t* bound_port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(fd, 64) != 0) {
    ::close(fd);
    return -1;
  }
  if (bound_port != nullptr) {
    sockaddr_in actual{};
    socklen_t len = sizeof(actual);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&actual), &len);
    *bound_port = ntohs(actual.sin_port);
  }
  return fd;
}

int tcp_connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints,
                    &result) != 0)
    return -1;
  int fd = -1;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd >= 0) set_nodelay(fd);
  return fd;
}

bool write_all(int fd, ByteSpan data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

void write_segments(int fd, const std::vector<session::WireSegment>& segments) {
  for (const auto& seg : segments) {
    sleep_ms(seg.delay_ms);
    if (!write_all(fd, {seg.data.data(), seg.data.size()})) return;
  }
}

// --- ClientProxy ------------------------------------------------------------

ClientProxy::ClientProxy(ClientProxyConfig config)
    : config_(std::move(config)) {}

ClientProxy::~ClientProxy() { stop(); }

bool ClientProxy::start() {
  if (!config_.state_dir.empty()) {
    std::filesystem::create_directories(config_.state_dir);
    jar_ = std::make_unique<session::TicketJar>(config_.state_dir /
                                                "tickets.bin");
  }
  listen_fd_ = tcp_listen(config_.listen_host, config_.listen_port, &port_);
  if (listen_fd_ < 0) return false;
  accept_thread_ = std::thread([this] { accept_loop(); });
  return true;
}

void ClientProxy::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::scoped_lock lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
}

void ClientProxy::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) break;
    std::scoped_lock lock(workers_mu_);
    workers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void ClientProxy::handle_connection(int local_fd) {
  if (!socks5_accept(local_fd)) {
    ::close(local_fd);
    return;
  }
  int bridge_fd = tcp_connect(config_.bridge.host, config_.bridge.port);
  if (!socks5_reply(local_fd, bridge_fd >= 0) || bridge_fd < 0) {
    if (bridge_fd >= 0) ::close(bridge_fd);
    ::close(local_fd);
    return;
  }

  session::ClientSession::Config scfg;
  scfg.bridge_secret = config_.bridge.secret;
  scfg.morph_seed = config_.morph_seed;
  if (jar_) {
    std::scoped_lock lock(jar_mu_);
    scfg.ticket = jar_->take(config_.bridge.id());
  }
  session::ClientSession session(std::move(scfg));
  write_segments(bridge_fd, session.connect());

  bool ticket_saved = false;
  pollfd fds[2] = {{local_fd, POLLIN, 0}, {bridge_fd, POLLIN, 0}};
  Bytes buf;
  while (!stopping_ && !session.poisoned()) {
    fds[0].revents = fds[1].revents = 0;
    int rc = ::poll(fds, 2, 200);
    if (rc < 0) break;
    if (fds[0].revents & (POLLIN | POLLHUP)) {
      if (read_some(local_fd, buf) <= 0) break;
      write_segments(bridge_fd, session.send_app({buf.data(), buf.size()}));
    }
    if (fds[1].revents & (POLLIN | POLLHUP)) {
      if (read_some(bridge_fd, buf) <= 0) break;
      auto res = session.pump({buf.data(), buf.size()});
      if (!res.app_data.empty() &&
          !write_all(local_fd, {res.app_data.data(), res.app_data.size()}))
        break;
      write_segments(bridge_fd, res.wire_out);
    }
    if (!ticket_saved && session.fresh_ticket() && jar_) {
      std::scoped_lock lock(jar_mu_);
      jar_->put(config_.bridge.id(), *session.fresh_ticket());
      ticket_saved = true;
    }
  }
  ::close(bridge_fd);
  ::close(local_fd);
}

// --- ServerProxy ------------------------------------------------------------

ServerProxy::ServerProxy(ServerProxyConfig config)
    : config_(std::move(config)) {
  ctx_ = std::make_unique<session::ServerContext>(config_.bridge_secret,
                                                  session::system_clock());
  if (!config_.state_dir.empty()) {
    std::filesystem::create_directories(config_.state_dir);
    if (auto keys =
            session::load_ticket_keys(config_.state_dir / "ticket_keys.bin"))
      ctx_->ticket_keys = *keys;
    else
      persist_keys();
  }
}

ServerProxy::~ServerProxy() { stop(); }

void ServerProxy::persist_keys() {
  if (config_.state_dir.empty()) return;
  std::scoped_lock lock(ctx_->mu);
  session::save_ticket_keys(ctx_->ticket_keys,
                            config_.state_dir / "ticket_keys.bin");
}

bool ServerProxy::start() {
  listen_fd_ = tcp_listen(config_.listen_host, config_.listen_port, &port_);
  if (listen_fd_ < 0) return false;
  accept_thread_ = std::thread([this] { accept_loop(); });
  return true;
}

void ServerProxy::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::scoped_lock lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
}

void ServerProxy::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) break;
    set_nodelay(fd);
    std::scoped_lock lock(workers_mu_);
    workers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void ServerProxy::handle_connection(int client_fd) {
  session::ServerSession session(*ctx_);
  int upstream_fd = -1;
  auto last_activity = std::chrono::steady_clock::now();

  Bytes buf;
  while (!stopping_) {
    pollfd fds[2] = {{client_fd, POLLIN, 0}, {-1, POLLIN, 0}};
    nfds_t nfds = 1;
    if (upstream_fd >= 0) {
      fds[1].fd = upstream_fd;
      nfds = 2;
    }
    int rc = ::poll(fds, nfds, 200);
    if (rc < 0) break;
    if (rc == 0) {
      // unauthenticated (or poisoned) connections die by idle timeout,
      // never by a protocol-level response
      auto idle = std::chrono::steady_clock::now() - last_activity;
      if ((!session.established() || session.poisoned()) &&
          idle > std::chrono::seconds(config_.idle_timeout_secs))
        break;
      continue;
    }
    if (fds[0].revents & (POLLIN | POLLHUP)) {
      if (read_some(client_fd, buf) <= 0) break;
      last_activity = std::chrono::steady_clock::now();
      auto res = session.pump({buf.data(), buf.size()});
      write_segments(client_fd, res.wire_out);
      if (session.established() && upstream_fd < 0) {
        upstream_fd = tcp_connect(config_.upstream_host,
                                  config_.upstream_port);
        if (upstream_fd < 0) break;
      }
      if (!res.app_data.empty() &&
          !write_all(upstream_fd, {res.app_data.data(), res.app_data.size()}))
        break;
    }
    if (nfds == 2 && (fds[1].revents & (POLLIN | POLLHUP))) {
      if (read_some(upstream_fd, buf) <= 0) break;
      last_activity = std::chrono::steady_clock::now();
      write_segments(client_fd, session.send_app({buf.data(), buf.size()}));
    }
  }
  session.close();
  persist_keys();
  if (upstream_fd >= 0) ::close(upstream_fd);
  ::close(client_fd);
}

}  // namespace scramblesuit::net
