#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "scramblesuit/crypto.hpp"
#include "scramblesuit/net.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

bool split_host_port(const std::string& addr, std::string& host,
                     std::uint16_t& port) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) return false;
  host = addr.substr(0, colon);
  int p = std::atoi(addr.c_str() + colon + 1);
  if (p <= 0 || p > 65535) return false;
  port = static_cast<std::uint16_t>(p);
  return true;
}

std::optional<scramblesuit::Bytes> seed_from_u64(std::uint64_t seed,
                                                 bool seed_set) {
  if (!seed_set) return std::nullopt;
  scramblesuit::Bytes buf;
  scramblesuit::put_u64be(buf, seed);
  return scramblesuit::crypto::sha256({buf.data(), buf.size()});
}

}  // namespace

int main(int argc, char** argv) {
  using namespace scramblesuit;

  CLI::App app{"ScrambleSuit blocking-resistant transport proxy"};
  app.require_subcommand(1);

  // client
  auto* client = app.add_subcommand(
      "client", "SOCKS5 listener relaying to a ScrambleSuit bridge");
  std::string listen = "127.0.0.1:1080";
  std::string bridge_line;
  std::string password;
  std::string bridge_addr;
  std::string state_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int idle_timeout = 30;
  client->add_option("--listen", listen, "local HOST:PORT for SOCKS5");
  client->add_option("--bridge", bridge_addr, "bridge HOST:PORT");
  client->add_option("--password", password, "bridge secret (Base32)");
  client->add_option("--descriptor", bridge_line,
                     "full descriptor line instead of --bridge/--password");
  client->add_option("--state-dir", state_dir, "directory for stored tickets");
  client->add_option("--seed", seed, "deterministic morphing seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  client->add_option("--idle-timeout", idle_timeout, "seconds");

  // server
  auto* server = app.add_subcommand(
      "server", "ScrambleSuit server relaying to an upstream");
  std::string srv_listen = "0.0.0.0:4433";
  std::string upstream;
  std::string srv_password;
  std::string srv_state_dir;
  int srv_idle_timeout = 30;
  server->add_option("--listen", srv_listen, "HOST:PORT to listen on");
  server->add_option("--upstream", upstream, "upstream HOST:PORT")->required();
  server->add_option("--password", srv_password, "bridge secret (Base32)")
      ->required();
  server->add_option("--state-dir", srv_state_dir,
                     "directory for ticket key persistence");
  server->add_option("--idle-timeout", srv_idle_timeout, "seconds");

  // gendesc
  auto* gendesc =
      app.add_subcommand("gendesc", "generate a bridge descriptor line");
  std::string gen_host = "0.0.0.0";
  std::uint16_t gen_port = 4433;
  gendesc->add_option("--host", gen_host, "advertised host");
  gendesc->add_option("--port", gen_port, "advertised port");

  CLI11_PARSE(app, argc, argv);

  if (gendesc->parsed()) {
    descriptor::BridgeDescriptor desc;
    desc.host = gen_host;
    desc.port = gen_port;
    desc.secret = crypto::secure_random(descriptor::kBridgeSecretLen);
    std::cout << descriptor::format_descriptor(desc) << "\n";
    return 0;
  }

  if (client->parsed()) {
    net::ClientProxyConfig config;
    if (!bridge_line.empty()) {
      std::string err;
      auto desc = descriptor::parse_descriptor(bridge_line, &err);
      if (!desc) {
        std::cerr << "bad descriptor: " << err << "\n";
        return 1;
      }
      config.bridge = *desc;
    } else {
      if (bridge_addr.empty() || password.empty()) {
        std::cerr << "need --descriptor or both --bridge and --password\n";
        return 1;
      }
      if (!split_host_port(bridge_addr, config.bridge.host,
                           config.bridge.port)) {
        std::cerr << "bad --bridge address\n";
        return 1;
      }
      auto secret = descriptor::base32_decode(password);
      if (!secret || secret->empty()) {
        std::cerr << "bad --password: not valid Base32\n";
        return 1;
      }
      config.bridge.secret = *secret;
    }
    if (!split_host_port(listen, config.listen_host, config.listen_port)) {
      std::cerr << "bad --listen address\n";
      return 1;
    }
    config.state_dir = state_dir;
    config.morph_seed = seed_from_u64(seed, seed_set);
    config.idle_timeout_secs = idle_timeout;

    net::ClientProxy proxy(std::move(config));
    if (!proxy.start()) {
      std::cerr << "failed to listen on " << listen << "\n";
      return 1;
    }
    std::cerr << "SOCKS5 listening on " << config.listen_host << ":"
              << proxy.port() << "\n";
    wait_for_signal();
    proxy.stop();
    return 0;
  }

  // server
  net::ServerProxyConfig config;
  if (!split_host_port(srv_listen, config.listen_host, config.listen_port)) {
    std::cerr << "bad --listen address\n";
    return 1;
  }
  if (!split_host_port(upstream, config.upstream_host,
                       config.upstream_port)) {
    std::cerr << "bad --upstream address\n";
    return 1;
  }
  auto secret = descriptor::base32_decode(srv_password);
  if (!secret || secret->empty()) {
    std::cerr << "bad --password: not valid Base32\n";
    return 1;
  }
  config.bridge_secret = *secret;
  config.state_dir = srv_state_dir;
  config.idle_timeout_secs = srv_idle_timeout;

  net::ServerProxy proxy(std::move(config));
  if (!proxy.start()) {
    std::cerr << "failed to listen on " << srv_listen << "\n";
    return 1;
  }
  std::cerr << "ScrambleSuit server on " << config.listen_host << ":"
            << proxy.port() << "\n";
  wait_for_signal();
  proxy.stop();
  return 0;
}
