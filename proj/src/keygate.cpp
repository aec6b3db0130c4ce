#include "sider/keygate.hpp"

#include <sodium.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "sider/rng.hpp"

namespace sider {

namespace {

struct SodiumInit {
    SodiumInit() {
        if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    }
};

void require_sodium() { static SodiumInit once; }

std::string to_hex(const unsigned char* buf, size_t n) {
    std::string hex(2 * n + 1, '\0');
    sodium_bin2hex(hex.data(), hex.size(), buf, n);
    hex.resize(2 * n);
    return hex;
}

std::vector<unsigned char> hex_to_bytes(const std::string& hex) {
    std::vector<unsigned char> out(hex.size() / 2);
    size_t got = 0;
    if (sodium_hex2bin(out.data(), out.size(), hex.c_str(), hex.size(), nullptr, &got, nullptr) != 0 ||
        got != out.size())
        throw std::invalid_argument("bad hex string");
    return out;
}

}  // namespace

ProtectionKey ProtectionKey::generate() {
    require_sodium();
    ProtectionKey k;
    randombytes_buf(k.bits.data(), k.bits.size());
    unsigned char salt[16];
    randombytes_buf(salt, sizeof salt);
    k.key_id = to_hex(salt, sizeof salt);
    return k;
}

ProtectionKey ProtectionKey::from_seed(uint64_t seed) {
    require_sodium();
    ProtectionKey k;
    Rng rng(seed);
    for (auto& b : k.bits) b = (uint8_t)(rng.next_u64() & 0xff);
    unsigned char salt[16];
    for (auto& b : salt) b = (unsigned char)(rng.next_u64() & 0xff);
    k.key_id = to_hex(salt, sizeof salt);
    return k;
}

ProtectionKey ProtectionKey::from_hex(const std::string& bits_hex, const std::string& salt_hex) {
    require_sodium();
    auto bits = hex_to_bytes(bits_hex);
    if (bits.size() != 16) throw std::invalid_argument("key bits must be 16 bytes hex");
    if (salt_hex.size() != 32) throw std::invalid_argument("key salt must be 16 bytes hex");
    hex_to_bytes(salt_hex);  // validates
    ProtectionKey k;
    std::memcpy(k.bits.data(), bits.data(), 16);
    k.key_id = salt_hex;
    return k;
}

std::string ProtectionKey::bits_hex() const { return to_hex(bits.data(), bits.size()); }

Tensor key_expand(const ProtectionKey& key, const std::vector<int>& shape) {
    require_sodium();
    auto salt = hex_to_bytes(key.key_id);

    // PRF key and nonce derived from (bits, salt)
    unsigned char prf_key[crypto_stream_chacha20_KEYBYTES];
    {
        crypto_generichash_state st;
        crypto_generichash_init(&st, key.bits.data(), key.bits.size(), sizeof prf_key);
        crypto_generichash_update(&st, salt.data(), salt.size());
        const char* tag = "sider-expand";
        crypto_generichash_update(&st, (const unsigned char*)tag, std::strlen(tag));
        crypto_generichash_final(&st, prf_key, sizeof prf_key);
    }
    unsigned char nonce[crypto_stream_chacha20_NONCEBYTES];
    {
        const char* tag = "sider-nonce";
        crypto_generichash(nonce, sizeof nonce, (const unsigned char*)tag, std::strlen(tag), salt.data(),
                           salt.size());
    }

    Tensor out(shape);
    int64_t n = out.size();
    // two 32-bit uniforms per gaussian via Box-Muller
    std::vector<unsigned char> stream((size_t)n * 8);
    crypto_stream_chacha20(stream.data(), stream.size(), nonce, prf_key);
    for (int64_t i = 0; i < n; ++i) {
        uint32_t a, b;
        std::memcpy(&a, &stream[(size_t)i * 8], 4);
        std::memcpy(&b, &stream[(size_t)i * 8 + 4], 4);
        real u1 = ((real)a + 0.5) / 4294967296.0;
        real u2 = ((real)b + 0.5) / 4294967296.0;
        out[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    return out;
}

std::string key_commitment(const ProtectionKey& key) {
    require_sodium();
    auto salt = hex_to_bytes(key.key_id);
    unsigned char mac[16];
    crypto_generichash_state st;
    crypto_generichash_init(&st, key.bits.data(), key.bits.size(), sizeof mac);
    crypto_generichash_update(&st, salt.data(), salt.size());
    const char* tag = "sider-commit";
    crypto_generichash_update(&st, (const unsigned char*)tag, std::strlen(tag));
    crypto_generichash_final(&st, mac, sizeof mac);
    return to_hex(mac, sizeof mac);
}

bool verify_commitment(const ProtectionKey& key, const std::string& salt_hex,
                       const std::string& commitment_hex) {
    require_sodium();
    ProtectionKey probe = key;
    probe.key_id = salt_hex;
    std::string expect = key_commitment(probe);
    if (expect.size() != commitment_hex.size()) return false;
    return sodium_memcmp(expect.data(), commitment_hex.data(), expect.size()) == 0;
}

}  // namespace sider
