#include "scramblesuit/descriptor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>
#include <vector>

namespace scramblesuit::descriptor {

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";

int base32_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a';
  if (c >= '2' && c <= '7') return c - '2' + 26;
  return -1;
}

bool fail(std::string* error, std::string msg) {
  if (error != nullptr) *error = std::move(msg);
  return false;
}

}  // namespace

std::string base32_encode(ByteSpan data) {
  std::string out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (std::uint8_t byte : data) {
    buffer = (buffer << 8) | byte;
    bits += 8;
    while (bits >= 5) {
      bits -= 5;
      out.push_back(kAlphabet[(buffer >> bits) & 0x1f]);
    }
  }
  if (bits > 0) out.push_back(kAlphabet[(buffer << (5 - bits)) & 0x1f]);
  while (out.size() % 8 != 0) out.push_back('=');
  return out;
}

std::optional<Bytes> base32_decode(std::string_view text) {
  // strip trailing padding, then every remaining character must be in the
  // alphabet
  std::size_t end = text.size();
  while (end > 0 && text[end - 1] == '=') end--;
  if (std::find(text.begin(), text.begin() + end, '=') != text.begin() + end ||
      (end != text.size() && text.size() % 8 != 0))
    return std::nullopt;

  Bytes out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (std::size_t i = 0; i < end; i++) {
    int v = base32_value(text[i]);
    if (v < 0) return std::nullopt;
    buffer = (buffer << 5) | static_cast<std::uint32_t>(v);
    bits += 5;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xff));
    }
  }
  // leftover bits must be zero-fill from encoding
  if (bits > 0 && (buffer & ((1u << bits) - 1)) != 0) return std::nullopt;
  return out;
}

std::optional<BridgeDescriptor> parse_descriptor(std::string_view line,
                                                 std::string* error) {
  std::istringstream in{std::string(line)};
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);

  std::size_t i = 0;
  if (i < tokens.size() && tokens[i] == "Bridge") i++;
  if (i >= tokens.size() || tokens[i] != "scramblesuit") {
    fail(error, "expected 'scramblesuit' transport name");
    return std::nullopt;
  }
  i++;
  if (i >= tokens.size()) {
    fail(error, "missing HOST:PORT");
    return std::nullopt;
  }
  const std::string& addr = tokens[i++];
  std::size_t colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= addr.size()) {
    fail(error, "malformed HOST:PORT");
    return std::nullopt;
  }
  BridgeDescriptor desc;
  desc.host = addr.substr(0, colon);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(addr.data() + colon + 1,
                                   addr.data() + addr.size(), port);
  if (ec != std::errc() || ptr != addr.data() + addr.size() || port == 0 ||
      port > 65535) {
    fail(error, "invalid port");
    return std::nullopt;
  }
  desc.port = static_cast<std::uint16_t>(port);

  if (i >= tokens.size() || tokens[i].rfind("password=", 0) != 0) {
    fail(error, "missing password= field");
    return std::nullopt;
  }
  auto secret = base32_decode(std::string_view(tokens[i]).substr(9));
  if (!secret || secret->empty()) {
    fail(error, "password is not valid Base32");
    return std::nullopt;
  }
  desc.secret = std::move(*secret);
  return desc;
}

std::string format_descriptor(const BridgeDescriptor& desc) {
  std::string encoded =
      base32_encode({desc.secret.data(), desc.secret.size()});
  // generated secrets are 20 bytes, which encode without padding
  while (!encoded.empty() && encoded.back() == '=') encoded.pop_back();
  return "scramblesuit " + desc.host + ":" + std::to_string(desc.port) +
         " password=" + encoded;
}

}  // namespace scramblesuit::descriptor
