#pragma once

#include <memory>
#include <stdexcept>

#include "scramblesuit/common.hpp"

namespace scramblesuit::crypto {

constexpr std::size_t kMasterKeyLen = 32;
constexpr std::size_t kMacKeyLen = 32;
constexpr std::size_t kMacLen = 16;
constexpr std::size_t kEncKeyLen = 32;
constexpr std::size_t kCtrNonceLen = 16;

struct MasterKey {
  std::array<std::uint8_t, kMasterKeyLen> bytes{};

  static MasterKey random();
  static MasterKey from_bytes(ByteSpan raw);

  ByteSpan span() const { return {bytes.data(), bytes.size()}; }
  bool operator==(const MasterKey&) const = default;
};

enum class Role { Client, Server };

/// Per-session key material, laid out so that a client's send half matches
/// the server's receive half when derived from the same master key.
struct SessionKeySet {
  std::array<std::uint8_t, kEncKeyLen> send_enc_key{};
  std::array<std::uint8_t, kCtrNonceLen> send_ctr_nonce{};
  std::array<std::uint8_t, kEncKeyLen> recv_enc_key{};
  std::array<std::uint8_t, kCtrNonceLen> recv_ctr_nonce{};
  std::array<std::uint8_t, kMacKeyLen> send_mac_key{};
  std::array<std::uint8_t, kMacKeyLen> recv_mac_key{};

  bool operator==(const SessionKeySet&) const = default;
};

class InvalidKeyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

SessionKeySet derive_session_keys(const MasterKey& master, Role role);

Bytes sha256(ByteSpan data);
Bytes hmac_sha256(ByteSpan key, ByteSpan data);

/// HKDF-SHA256 (extract + expand).
Bytes hkdf_sha256(ByteSpan ikm, ByteSpan salt, ByteSpan info, std::size_t out_len);

/// HMAC-SHA256 truncated to its first 16 bytes.
std::array<std::uint8_t, kMacLen> mac128(ByteSpan key, ByteSpan data);

/// Constant-time tag comparison.
bool mac128_verify(ByteSpan key, ByteSpan data, ByteSpan tag);

bool const_time_eq(ByteSpan a, ByteSpan b);

/// AES-256-CTR keystream, stateful across calls: the counter advances and
/// never resets within one direction of a session. Copying a cipher clones
/// its position, which is how speculative header decryption works.
class StreamCipher {
 public:
  StreamCipher(ByteSpan key, ByteSpan initial_counter);
  StreamCipher(const StreamCipher& other);
  StreamCipher& operator=(const StreamCipher& other);
  ~StreamCipher();

  /// XOR the keystream into `data` (encrypt == decrypt).
  Bytes process(ByteSpan data);
  void process_inplace(std::uint8_t* data, std::size_t len);

 private:
  void refill_block();

  std::array<std::uint8_t, kEncKeyLen> key_{};
  std::array<std::uint8_t, 16> counter_{};
  std::array<std::uint8_t, 16> keystream_{};
  std::size_t keystream_used_ = 16;
  void* ctx_ = nullptr;  // EVP_CIPHER_CTX
};

Bytes secure_random(std::size_t n);

}  // namespace scramblesuit::crypto
