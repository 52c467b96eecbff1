#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trace {

// Error categories surfaced by the library. Everything derives from
// std::runtime_error so callers that don't care can catch one type.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a 64-bit. Used for config hashes and artifact inventories; not
// cryptographic, just a stable content fingerprint.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v);

// FNV-1a over a file's raw bytes, formatted as 16 hex chars.
std::string file_content_hash(const std::string& path);

}  // namespace trace
