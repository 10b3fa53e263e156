#include "scramblesuit/handshake.hpp"

#include <openssl/bn.h>

#include <cstring>
#include <stdexcept>

namespace scramblesuit::handshake {

namespace {

constexpr std::string_view kHandshakeLabel = "ScrambleSuitHandshake";

// 1536-bit MODP group (RFC 3526, group 5), generator 2
constexpr const char* kModpPrimeHex =
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA237327FFFFFFFFFFFFFFFF";

struct BnCtxDeleter {
  void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct BnDeleter {
  void operator()(BIGNUM* p) const { BN_free(p); }
};
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;

const BIGNUM* modp_prime() {
  static BIGNUM* p = [] {
    BIGNUM* bn = nullptr;
    if (BN_hex2bn(&bn, kModpPrimeHex) == 0) std::abort();
    return bn;
  }();
  return p;
}

BnPtr bn_from_bytes(ByteSpan raw) {
  return BnPtr(BN_bin2bn(raw.data(), static_cast<int>(raw.size()), nullptr));
}

std::array<std::uint8_t, kPublicKeyLen> bn_to_wire(const BIGNUM* v) {
  std::array<std::uint8_t, kPublicKeyLen> out{};
  if (BN_bn2binpad(v, out.data(), kPublicKeyLen) != kPublicKeyLen)
    std::abort();
  return out;
}

std::array<std::uint8_t, 32> random_key32() {
  std::array<std::uint8_t, 32> k;
  Bytes r = crypto::secure_random(32);
  std::memcpy(k.data(), r.data(), 32);
  return k;
}

bool mac_matches_epoch(ByteSpan key, ByteSpan covered, ByteSpan tag,
                       std::int64_t now) {
  Epoch current = Epoch::from_unix(now);
  for (std::uint64_t h : {current.hours, current.hours - 1}) {
    Bytes msg(covered.begin(), covered.end());
    put_u64be(msg, h);
    if (crypto::mac128_verify(key, msg, tag)) return true;
  }
  return false;
}

}  // namespace

TicketKeyPair TicketKeyPair::generate(std::int64_t now) {
  TicketKeyPair pair;
  pair.enc_key = random_key32();
  pair.mac_key = random_key32();
  pair.created_at = now;
  return pair;
}

TicketKeyStore TicketKeyStore::generate(std::int64_t now) {
  return TicketKeyStore{TicketKeyPair::generate(now), std::nullopt};
}

void ReplayCache::insert(ByteSpan value, std::int64_t now) {
  std::string key(32, '\0');
  std::memcpy(key.data(), value.data(), std::min<std::size_t>(value.size(), 32));
  entries_[key] = now / 3600;
}

void ReplayCache::evict(std::int64_t now) {
  std::int64_t hour = now / 3600;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (hour - it->second > kReplayHorizonHours)
      it = entries_.erase(it);
    else
      ++it;
  }
}

bool ReplayCache::contains(ByteSpan value, std::int64_t now) {
  evict(now);
  std::string key(32, '\0');
  std::memcpy(key.data(), value.data(), std::min<std::size_t>(value.size(), 32));
  return entries_.count(key) != 0;
}

SessionTicket issue_ticket(const TicketKeyStore& store,
                           const crypto::MasterKey& master, std::int64_t now) {
  Bytes iv = crypto::secure_random(kTicketIvLen);
  Bytes body;
  append(body, master.span());
  put_u64be(body, static_cast<std::uint64_t>(now));
  body.resize(kTicketBodyLen, 0);

  crypto::StreamCipher cipher(
      {store.current.enc_key.data(), store.current.enc_key.size()},
      {iv.data(), iv.size()});
  Bytes ct = cipher.process({body.data(), body.size()});

  Bytes authed = iv;
  append(authed, {ct.data(), ct.size()});
  auto tag = crypto::mac128(
      {store.current.mac_key.data(), store.current.mac_key.size()},
      {authed.data(), authed.size()});

  SessionTicket ticket;
  std::memcpy(ticket.blob.data(), iv.data(), kTicketIvLen);
  std::memcpy(ticket.blob.data() + kTicketIvLen, ct.data(), kTicketBodyLen);
  std::memcpy(ticket.blob.data() + kTicketIvLen + kTicketBodyLen, tag.data(),
              crypto::kMacLen);
  return ticket;
}

std::optional<crypto::MasterKey> redeem_ticket(const TicketKeyStore& store,
                                               ByteSpan blob,
                                               std::int64_t now) {
  if (blob.size() != kTicketLen) return std::nullopt;
  ByteSpan iv = blob.subspan(0, kTicketIvLen);
  ByteSpan ct = blob.subspan(kTicketIvLen, kTicketBodyLen);
  ByteSpan tag = blob.subspan(kTicketIvLen + kTicketBodyLen, crypto::kMacLen);

  const TicketKeyPair* pairs[2] = {&store.current, nullptr};
  if (store.superseded) pairs[1] = &*store.superseded;

  for (const TicketKeyPair* pair : pairs) {
    if (pair == nullptr) continue;
    Bytes authed(iv.begin(), iv.end());
    append(authed, ct);
    if (!crypto::mac128_verify({pair->mac_key.data(), pair->mac_key.size()},
                               {authed.data(), authed.size()}, tag))
      continue;
    crypto::StreamCipher cipher({pair->enc_key.data(), pair->enc_key.size()},
                                iv);
    Bytes body = cipher.process(ct);
    auto issued = static_cast<std::int64_t>(get_u64be(body.data() + 32));
    if (now - issued >= kTicketLifetimeSecs) return std::nullopt;
    return crypto::MasterKey::from_bytes({body.data(), 32});
  }
  return std::nullopt;
}

void rotate_if_due(TicketKeyStore& store, std::int64_t now) {
  if (now - store.current.created_at >= kKeyRotationSecs) {
    store.superseded = store.current;
    store.current = TicketKeyPair::generate(now);
  }
  // a superseded pair can no longer verify any live ticket once two
  // rotation periods have passed since its creation
  if (store.superseded &&
      now - store.superseded->created_at >= 2 * kKeyRotationSecs)
    store.superseded.reset();
}

std::array<std::uint8_t, 32> handshake_mac_key(
    const crypto::MasterKey& master) {
  Bytes okm =
      crypto::hkdf_sha256(master.span(), {}, to_bytes(kHandshakeLabel), 32);
  std::array<std::uint8_t, 32> key;
  std::memcpy(key.data(), okm.data(), 32);
  return key;
}

Bytes build_ticket_handshake(const crypto::MasterKey& master,
                             const SessionTicket& ticket,
                             std::uint32_t pad_len, Epoch epoch,
                             const RandomSource& rng) {
  if (pad_len > kMaxPadLen) throw std::invalid_argument("pad_len out of range");
  auto mac_key = handshake_mac_key(master);

  Bytes out(ticket.blob.begin(), ticket.blob.end());
  Bytes padding = rng(pad_len);
  append(out, {padding.data(), padding.size()});

  Bytes covered = out;
  append(covered, {epoch.to_bytes().data(), 8});
  auto tag = crypto::mac128({mac_key.data(), mac_key.size()},
                            {covered.data(), covered.size()});
  append(out, {tag.data(), tag.size()});
  return out;
}

TicketScanResult scan_ticket_handshake(const TicketKeyStore& store,
                                       ReplayCache& replay, ByteSpan buffered,
                                       std::int64_t now) {
  constexpr std::size_t kMinLen = kTicketLen + crypto::kMacLen;
  constexpr std::size_t kMaxLen = kTicketLen + kMaxPadLen + crypto::kMacLen;
  if (buffered.size() < kMinLen) return NeedMoreData{};

  auto master = redeem_ticket(store, buffered.subspan(0, kTicketLen), now);
  if (!master) {
    if (buffered.size() > kMaxLen) return Reject{};
    return NeedMoreData{};
  }
  if (replay.contains(master->span(), now)) return Reject{};

  auto mac_key = handshake_mac_key(*master);
  std::size_t limit = std::min(buffered.size(), kMaxLen);
  for (std::size_t len = kMinLen; len <= limit; len++) {
    if (mac_matches_epoch({mac_key.data(), mac_key.size()},
                          buffered.subspan(0, len - crypto::kMacLen),
                          buffered.subspan(len - crypto::kMacLen,
                                           crypto::kMacLen),
                          now))
      return TicketAccepted{*master, len};
  }
  if (buffered.size() > kMaxLen) return Reject{};
  return NeedMoreData{};
}

UniformDhKeypair uniformdh_keypair(const RandomSource& rng) {
  Bytes x = rng(kPublicKeyLen);
  x[kPublicKeyLen - 1] &= 0xfe;  // even exponent
  bool negate = (rng(1)[0] & 1) != 0;
  return uniformdh_keypair_from({x.data(), x.size()}, negate);
}

UniformDhKeypair uniformdh_keypair_from(ByteSpan private_x, bool send_negated) {
  if (private_x.size() != kPublicKeyLen)
    throw std::invalid_argument("private key must be 192 bytes");
  if ((private_x[kPublicKeyLen - 1] & 1) != 0)
    throw std::invalid_argument("private key must be even");

  std::unique_ptr<BN_CTX, BnCtxDeleter> ctx(BN_CTX_new());
  BnPtr x = bn_from_bytes(private_x);
  BnPtr g(BN_new());
  BN_set_word(g.get(), 2);
  BnPtr pub(BN_new());
  if (BN_mod_exp(pub.get(), g.get(), x.get(), modp_prime(), ctx.get()) != 1)
    std::abort();
  if (send_negated) {
    BnPtr neg(BN_new());
    BN_sub(neg.get(), modp_prime(), pub.get());
    pub = std::move(neg);
  }

  UniformDhKeypair pair;
  pair.private_x.assign(private_x.begin(), private_x.end());
  pair.public_wire = bn_to_wire(pub.get());
  return pair;
}

std::optional<crypto::MasterKey> uniformdh_shared(const UniformDhKeypair& own,
                                                  ByteSpan peer_wire) {
  if (peer_wire.size() != kPublicKeyLen) return std::nullopt;
  std::unique_ptr<BN_CTX, BnCtxDeleter> ctx(BN_CTX_new());
  BnPtr peer = bn_from_bytes(peer_wire);
  if (BN_is_zero(peer.get()) || BN_cmp(peer.get(), modp_prime()) >= 0)
    return std::nullopt;
  BnPtr x = bn_from_bytes({own.private_x.data(), own.private_x.size()});
  BnPtr shared(BN_new());
  if (BN_mod_exp(shared.get(), peer.get(), x.get(), modp_prime(), ctx.get()) !=
      1)
    return std::nullopt;
  auto wire = bn_to_wire(shared.get());
  Bytes digest = crypto::sha256({wire.data(), wire.size()});
  return crypto::MasterKey::from_bytes({digest.data(), 32});
}

Bytes build_uniformdh_handshake(ByteSpan mac_key_kb,
                                const UniformDhKeypair& own,
                                std::uint32_t pad_len, Epoch epoch,
                                const RandomSource& rng) {
  if (pad_len > kMaxPadLen) throw std::invalid_argument("pad_len out of range");
  Bytes out(own.public_wire.begin(), own.public_wire.end());
  Bytes padding = rng(pad_len);
  append(out, {padding.data(), padding.size()});

  Bytes covered = out;
  append(covered, {epoch.to_bytes().data(), 8});
  auto tag = crypto::mac128(mac_key_kb, {covered.data(), covered.size()});
  append(out, {tag.data(), tag.size()});
  return out;
}

UniformDhScanResult scan_uniformdh_handshake(ByteSpan mac_key_kb,
                                             ReplayCache& replay,
                                             ByteSpan buffered,
                                             std::int64_t now) {
  constexpr std::size_t kMinLen = kPublicKeyLen + crypto::kMacLen;
  constexpr std::size_t kMaxLen = kPublicKeyLen + kMaxPadLen + crypto::kMacLen;
  if (buffered.size() < kMinLen) return NeedMoreData{};

  std::size_t limit = std::min(buffered.size(), kMaxLen);
  for (std::size_t len = kMinLen; len <= limit; len++) {
    ByteSpan tag = buffered.subspan(len - crypto::kMacLen, crypto::kMacLen);
    if (!mac_matches_epoch(mac_key_kb,
                           buffered.subspan(0, len - crypto::kMacLen), tag,
                           now))
      continue;
    if (replay.contains(tag, now)) return Reject{};
    UniformDhAccepted acc;
    std::memcpy(acc.peer_public.data(), buffered.data(), kPublicKeyLen);
    std::memcpy(acc.mac_tag.data(), tag.data(), crypto::kMacLen);
    acc.consumed = len;
    return acc;
  }
  if (buffered.size() > kMaxLen) return Reject{};
  return NeedMoreData{};
}

}  // namespace scramblesuit::handshake
