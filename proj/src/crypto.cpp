#include "cycledger/crypto.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace cycledger::crypto {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Digest keyed(std::string_view domain, const SecretKey& sk, std::span<const std::uint8_t> msg) {
  ByteWriter w;
  w.str(domain).digest(sk.bytes).raw(msg);
  return hash(w);
}

}  // namespace

std::string Digest::hex() const {
  std::string out;
  out.reserve(kDigestSize * 2);
  for (auto b : bytes) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != kDigestSize * 2) throw std::invalid_argument("digest hex must be 64 chars");
  Digest d;
  for (std::size_t i = 0; i < kDigestSize; ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("bad hex digit in digest");
    d.bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return d;
}

Digest Digest::max() {
  Digest d;
  d.bytes.fill(0xff);
  return d;
}

std::uint64_t Digest::mod(std::uint64_t m) const {
  if (m == 0) throw std::invalid_argument("modulus must be positive");
  unsigned __int128 acc = 0;
  for (auto b : bytes) acc = ((acc << 8) | b) % m;
  return static_cast<std::uint64_t>(acc);
}

ByteWriter& ByteWriter::u8(std::uint8_t v) {
  buf_.push_back(v);
  return *this;
}

ByteWriter& ByteWriter::u32(std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
  return *this;
}

ByteWriter& ByteWriter::u64(std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
  return *this;
}

ByteWriter& ByteWriter::digest(const Digest& d) {
  buf_.insert(buf_.end(), d.bytes.begin(), d.bytes.end());
  return *this;
}

ByteWriter& ByteWriter::signature(const Signature& s) { return digest(s.bytes).key(s.signer); }

ByteWriter& ByteWriter::bytes(std::span<const std::uint8_t> data) {
  u64(data.size());
  return raw(data);
}

ByteWriter& ByteWriter::str(std::string_view s) {
  u64(s.size());
  buf_.insert(buf_.end(), s.begin(), s.end());
  return *this;
}

ByteWriter& ByteWriter::raw(std::span<const std::uint8_t> data) {
  buf_.insert(buf_.end(), data.begin(), data.end());
  return *this;
}

Digest hash(std::span<const std::uint8_t> input) {
  // One fetched algorithm and context per thread; fetching per call costs
  // more than hashing a short message.
  struct Sha256 {
    EVP_MD* md = EVP_MD_fetch(nullptr, "SHA256", nullptr);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~Sha256() {
      EVP_MD_CTX_free(ctx);
      EVP_MD_free(md);
    }
  };
  thread_local Sha256 sha;
  Digest d;
  unsigned int len = 0;
  if (!sha.md || !sha.ctx || EVP_DigestInit_ex(sha.ctx, sha.md, nullptr) != 1 ||
      EVP_DigestUpdate(sha.ctx, input.data(), input.size()) != 1 ||
      EVP_DigestFinal_ex(sha.ctx, d.bytes.data(), &len) != 1 || len != kDigestSize) {
    throw std::runtime_error("SHA-256 unavailable");
  }
  return d;
}

Digest hash(std::string_view input) {
  return hash(std::span(reinterpret_cast<const std::uint8_t*>(input.data()), input.size()));
}

PublicKey public_from_secret(const SecretKey& sk) {
  ByteWriter w;
  w.str("pk").digest(sk.bytes);
  return PublicKey{hash(w)};
}

KeyPair derive_keypair(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  ByteWriter w;
  w.str("sk").u64(seed).str(label).u64(index);
  SecretKey sk{hash(w)};
  return KeyPair{public_from_secret(sk), sk};
}

SimCrypto::SimCrypto(const std::vector<KeyPair>& registered) {
  for (const auto& kp : registered) {
    if (public_from_secret(kp.secret_key) != kp.public_key)
      throw std::invalid_argument("key pair is inconsistent");
    if (!registry_.emplace(kp.public_key, kp.secret_key).second)
      throw std::invalid_argument("duplicate public key " + kp.public_key.bytes.hex());
  }
}

Signature SimCrypto::sign(const SecretKey& sk, std::span<const std::uint8_t> message) const {
  return Signature{keyed("sig", sk, message), public_from_secret(sk)};
}

bool SimCrypto::verify(const PublicKey& pk, std::span<const std::uint8_t> message,
                       const Signature& sig) const {
  if (sig.signer != pk) return false;
  auto it = registry_.find(pk);
  if (it == registry_.end()) return false;
  return keyed("sig", it->second, message) == sig.bytes;
}

VrfOutput SimCrypto::vrf_eval(const SecretKey& sk, std::span<const std::uint8_t> input) const {
  Digest h = keyed("vrf", sk, input);
  ByteWriter w;
  w.bytes(input).digest(h);
  return VrfOutput{h, sign(sk, w)};
}

bool SimCrypto::vrf_verify(const PublicKey& pk, std::span<const std::uint8_t> input,
                           const Digest& hash_value, const Signature& proof) const {
  auto it = registry_.find(pk);
  if (it == registry_.end()) return false;
  if (keyed("vrf", it->second, input) != hash_value) return false;
  ByteWriter w;
  w.bytes(input).digest(hash_value);
  return verify(pk, w, proof);
}

}  // namespace cycledger::crypto
