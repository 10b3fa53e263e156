#include "scramblesuit/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cstdlib>
#include <cstring>

namespace scramblesuit::crypto {

namespace {

constexpr std::string_view kSessionKeyLabel = "ScrambleSuitKeys";

[[noreturn]] void fatal(const char* msg) {
  std::fputs(msg, stderr);
  std::fputc('\n', stderr);
  std::abort();
}

}  // namespace

MasterKey MasterKey::random() {
  MasterKey k;
  Bytes r = secure_random(kMasterKeyLen);
  std::memcpy(k.bytes.data(), r.data(), kMasterKeyLen);
  return k;
}

MasterKey MasterKey::from_bytes(ByteSpan raw) {
  if (raw.size() != kMasterKeyLen)
    throw InvalidKeyError("master key must be 32 bytes");
  MasterKey k;
  std::memcpy(k.bytes.data(), raw.data(), kMasterKeyLen);
  return k;
}

Bytes sha256(ByteSpan data) {
  Bytes out(SHA256_DIGEST_LENGTH);
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Bytes hmac_sha256(ByteSpan key, ByteSpan data) {
  Bytes out(SHA256_DIGEST_LENGTH);
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
           data.size(), out.data(), &len) == nullptr ||
      len != SHA256_DIGEST_LENGTH)
    fatal("HMAC-SHA256 failed");
  return out;
}

Bytes hkdf_sha256(ByteSpan ikm, ByteSpan salt, ByteSpan info,
                  std::size_t out_len) {
  // extract
  Bytes prk = hmac_sha256(salt, ikm);
  // expand
  Bytes out;
  out.reserve(out_len);
  Bytes block;
  std::uint8_t counter = 1;
  while (out.size() < out_len) {
    Bytes msg = block;
    append(msg, info);
    msg.push_back(counter++);
    block = hmac_sha256(prk, msg);
    std::size_t take = std::min(block.size(), out_len - out.size());
    out.insert(out.end(), block.begin(), block.begin() + take);
  }
  return out;
}

SessionKeySet derive_session_keys(const MasterKey& master, Role role) {
  Bytes okm = hkdf_sha256(master.span(), {}, to_bytes(kSessionKeyLabel), 160);
  // layout: enc C2S(32) | nonce C2S(16) | enc S2C(32) | nonce S2C(16) |
  //         mac C2S(32) | mac S2C(32)
  const std::uint8_t* p = okm.data();
  SessionKeySet keys;
  auto copy = [&p](auto& dst) {
    std::memcpy(dst.data(), p, dst.size());
    p += dst.size();
  };
  if (role == Role::Client) {
    copy(keys.send_enc_key);
    copy(keys.send_ctr_nonce);
    copy(keys.recv_enc_key);
    copy(keys.recv_ctr_nonce);
    copy(keys.send_mac_key);
    copy(keys.recv_mac_key);
  } else {
    copy(keys.recv_enc_key);
    copy(keys.recv_ctr_nonce);
    copy(keys.send_enc_key);
    copy(keys.send_ctr_nonce);
    copy(keys.recv_mac_key);
    copy(keys.send_mac_key);
  }
  return keys;
}

std::array<std::uint8_t, kMacLen> mac128(ByteSpan key, ByteSpan data) {
  Bytes full = hmac_sha256(key, data);
  std::array<std::uint8_t, kMacLen> tag;
  std::memcpy(tag.data(), full.data(), kMacLen);
  return tag;
}

bool const_time_eq(ByteSpan a, ByteSpan b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

bool mac128_verify(ByteSpan key, ByteSpan data, ByteSpan tag) {
  auto expected = mac128(key, data);
  return const_time_eq({expected.data(), expected.size()}, tag);
}

StreamCipher::StreamCipher(ByteSpan key, ByteSpan initial_counter) {
  if (key.size() != kEncKeyLen)
    throw InvalidKeyError("stream cipher key must be 32 bytes");
  if (initial_counter.size() != 16)
    throw InvalidKeyError("counter block must be 16 bytes");
  std::memcpy(key_.data(), key.data(), kEncKeyLen);
  std::memcpy(counter_.data(), initial_counter.data(), 16);
}

StreamCipher::StreamCipher(const StreamCipher& other)
    : key_(other.key_),
      counter_(other.counter_),
      keystream_(other.keystream_),
      keystream_used_(other.keystream_used_) {}

StreamCipher& StreamCipher::operator=(const StreamCipher& other) {
  key_ = other.key_;
  counter_ = other.counter_;
  keystream_ = other.keystream_;
  keystream_used_ = other.keystream_used_;
  if (ctx_ != nullptr) {
    EVP_CIPHER_CTX_free(static_cast<EVP_CIPHER_CTX*>(ctx_));
    ctx_ = nullptr;
  }
  return *this;
}

StreamCipher::~StreamCipher() {
  if (ctx_ != nullptr) EVP_CIPHER_CTX_free(static_cast<EVP_CIPHER_CTX*>(ctx_));
  OPENSSL_cleanse(key_.data(), key_.size());
  OPENSSL_cleanse(keystream_.data(), keystream_.size());
}

void StreamCipher::refill_block() {
  if (ctx_ == nullptr) {
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    if (ctx == nullptr ||
        EVP_EncryptInit_ex(ctx, EVP_aes_256_ecb(), nullptr, key_.data(),
                           nullptr) != 1)
      fatal("AES-256 init failed");
    EVP_CIPHER_CTX_set_padding(ctx, 0);
    ctx_ = ctx;
  }
  int outl = 0;
  if (EVP_EncryptUpdate(static_cast<EVP_CIPHER_CTX*>(ctx_), keystream_.data(),
                        &outl, counter_.data(), 16) != 1 ||
      outl != 16)
    fatal("AES-256 block encryption failed");
  keystream_used_ = 0;
  // big-endian counter increment
  for (int i = 15; i >= 0; i--) {
    if (++counter_[i] != 0) break;
  }
}

void StreamCipher::process_inplace(std::uint8_t* data, std::size_t len) {
  for (std::size_t i = 0; i < len; i++) {
    if (keystream_used_ == 16) refill_block();
    data[i] ^= keystream_[keystream_used_++];
  }
}

Bytes StreamCipher::process(ByteSpan data) {
  Bytes out(data.begin(), data.end());
  process_inplace(out.data(), out.size());
  return out;
}

Bytes secure_random(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1)
    fatal("entropy source failure");
  return out;
}

}  // namespace scramblesuit::crypto
