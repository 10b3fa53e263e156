#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "scramblesuit/common.hpp"

namespace scramblesuit::descriptor {

constexpr std::size_t kBridgeSecretLen = 20;  // 32 Base32 characters

struct BridgeDescriptor {
  std::string host;
  std::uint16_t port = 0;
  Bytes secret;

  std::string id() const { return host + ":" + std::to_string(port); }
};

struct ParseError {
  std::string message;
};

/// RFC 4648 Base32 (A-Z, 2-7), no padding unless needed.
std::string base32_encode(ByteSpan data);

/// Case-insensitive decode; rejects characters outside the alphabet
/// (0, 1, 8 and 9 included) and bad padding.
std::optional<Bytes> base32_decode(std::string_view text);

/// Parse `scramblesuit HOST:PORT password=BASE32`, with an optional leading
/// `Bridge` keyword.
std::optional<BridgeDescriptor> parse_descriptor(std::string_view line,
                                                 std::string* error = nullptr);

/// Descriptor line for a fresh or given secret.
std::string format_descriptor(const BridgeDescriptor& desc);

}  // namespace scramblesuit::descriptor
