#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cycledger::crypto {

inline constexpr std::size_t kDigestSize = 32;

using Bytes = std::vector<std::uint8_t>;

struct Digest {
  std::array<std::uint8_t, kDigestSize> bytes{};

  auto operator<=>(const Digest&) const = default;

  std::string hex() const;
  static Digest from_hex(std::string_view hex);
  static Digest max();

  // Digest read as a big-endian unsigned integer, reduced mod `m`.
  std::uint64_t mod(std::uint64_t m) const;
};

struct PublicKey {
  Digest bytes;
  auto operator<=>(const PublicKey&) const = default;
};

struct SecretKey {
  Digest bytes;
  auto operator<=>(const SecretKey&) const = default;
};

struct KeyPair {
  PublicKey public_key;
  SecretKey secret_key;
};

struct Signature {
  Digest bytes;
  PublicKey signer;
  auto operator<=>(const Signature&) const = default;
};

struct VrfOutput {
  Digest hash;
  Signature proof;
  auto operator<=>(const VrfOutput&) const = default;
};

// Canonical big-endian, length-prefixed encoder. Every hashed or signed
// structure in the protocol is serialized through this.
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v);
  ByteWriter& u32(std::uint32_t v);
  ByteWriter& u64(std::uint64_t v);
  ByteWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  ByteWriter& digest(const Digest& d);
  ByteWriter& key(const PublicKey& k) { return digest(k.bytes); }
  ByteWriter& signature(const Signature& s);
  ByteWriter& bytes(std::span<const std::uint8_t> data);  // length-prefixed
  ByteWriter& str(std::string_view s);                     // length-prefixed
  ByteWriter& raw(std::span<const std::uint8_t> data);

  const Bytes& data() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

 private:
  Bytes buf_;
};

Digest hash(std::span<const std::uint8_t> input);
Digest hash(std::string_view input);
inline Digest hash(const ByteWriter& w) { return hash(w.data()); }

// Derives a reproducible key pair from the run seed and a label.
KeyPair derive_keypair(std::uint64_t seed, std::string_view label, std::uint64_t index);
PublicKey public_from_secret(const SecretKey& sk);

class CryptoProvider {
 public:
  virtual ~CryptoProvider() = default;

  virtual Signature sign(const SecretKey& sk, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(const PublicKey& pk, std::span<const std::uint8_t> message,
                      const Signature& sig) const = 0;
  virtual VrfOutput vrf_eval(const SecretKey& sk, std::span<const std::uint8_t> input) const = 0;
  virtual bool vrf_verify(const PublicKey& pk, std::span<const std::uint8_t> input,
                          const Digest& hash, const Signature& proof) const = 0;

  Signature sign(const SecretKey& sk, const ByteWriter& w) const { return sign(sk, w.data()); }
  bool verify(const PublicKey& pk, const ByteWriter& w, const Signature& sig) const {
    return verify(pk, w.data(), sig);
  }
};

// Keyed-hash simulation crypto. Signatures are H(sk || msg) and are checked by
// a registry that knows every registered key pair, which gives exact
// unforgeability semantics without real hardness.
class SimCrypto final : public CryptoProvider {
 public:
  explicit SimCrypto(const std::vector<KeyPair>& registered);

  Signature sign(const SecretKey& sk, std::span<const std::uint8_t> message) const override;
  bool verify(const PublicKey& pk, std::span<const std::uint8_t> message,
              const Signature& sig) const override;
  VrfOutput vrf_eval(const SecretKey& sk, std::span<const std::uint8_t> input) const override;
  bool vrf_verify(const PublicKey& pk, std::span<const std::uint8_t> input, const Digest& hash,
                  const Signature& proof) const override;

  using CryptoProvider::sign;
  using CryptoProvider::verify;

  bool is_registered(const PublicKey& pk) const { return registry_.contains(pk); }
  std::size_t size() const { return registry_.size(); }

 private:
  std::map<PublicKey, SecretKey> registry_;
};

}  // namespace cycledger::crypto
