#include "cycledger/rng.hpp"

#include <stdexcept>

#include "cycledger/crypto.hpp"

namespace cycledger {

Rng Rng::derive(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  crypto::ByteWriter w;
  w.str("rng").u64(seed).str(label).u64(index);
  auto d = crypto::hash(w);
  std::uint64_t s = 0;
  for (int i = 0; i < 8; ++i) s = (s << 8) | d.bytes[i];
  return Rng(s);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below bound must be positive");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::between empty range");
  return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double Rng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

}  // namespace cycledger
