#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "sider/tensor.hpp"

namespace sider {

// 128-bit protection key with a public salt. The key itself is never written
// by any tool; only the salted commitment lands in bundle headers.
struct ProtectionKey {
    std::array<uint8_t, 16> bits{};
    std::string key_id;  // public salt, 16 bytes hex

    static ProtectionKey generate();                 // cryptographic RNG
    static ProtectionKey from_seed(uint64_t seed);   // deterministic, tests/tools only
    static ProtectionKey from_hex(const std::string& bits_hex, const std::string& salt_hex);

    std::string bits_hex() const;
};

// keyed PRF stream reshaped to `shape`, mapped to zero-mean unit-variance
// reals; deterministic in (bits, salt)
Tensor key_expand(const ProtectionKey& key, const std::vector<int>& shape);

// salted MAC of the key (hex)
std::string key_commitment(const ProtectionKey& key);
bool verify_commitment(const ProtectionKey& key, const std::string& salt_hex,
                       const std::string& commitment_hex);

}  // namespace sider
