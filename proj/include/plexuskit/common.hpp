#pragma once

// Shared error types and small utilities used across the library.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace plexuskit {

using u8 = std::uint8_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

// Violated precondition or shape contract on an in-memory operation.
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Allocation failure annotated with the shape that was being allocated.
class MemoryError : public std::runtime_error {
public:
  explicit MemoryError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class IoErrorCode {
  MissingFile,
  TruncatedFile,
  ChecksumMismatch,
  ManifestMismatch,
  BadFormat,
  WriteFailed,
};

class IoError : public std::runtime_error {
public:
  IoError(IoErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  IoErrorCode code() const { return code_; }

private:
  IoErrorCode code_;
};

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

// FNV-1a 64-bit hash, used as the shard-file section checksum.
class Fnv1a64 {
public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ull;
    }
  }
  u64 digest() const { return state_; }

  static u64 of(const void* data, std::size_t n) {
    Fnv1a64 h;
    h.update(data, n);
    return h.digest();
  }

private:
  u64 state_ = 0xcbf29ce484222325ull;
};

}  // namespace plexuskit
