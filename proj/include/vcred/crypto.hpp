// Copyright 2026 The vcred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VCRED_CRYPTO_HPP
#define VCRED_CRYPTO_HPP

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <utility>

#include <openssl/ec.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>
#include <openssl/x509.h>

#include "vcred/encoding.hpp"

namespace vcred {

class CryptoError : public Error {
public:
    using Error::Error;
};

// Signature scheme: ECDSA over P-256 with SHA-256 digests. Public keys are
// carried as DER SubjectPublicKeyInfo, secret keys as DER ECPrivateKey, and
// signatures as DER ECDSA-Sig-Value. DER is canonical, so key bytes compare
// for equality.
inline constexpr std::uint8_t kSchemeEcdsaP256 = 0x01;

struct Digest {
    std::array<std::uint8_t, 32> bytes{};
    bool operator==(const Digest&) const = default;
    ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
    std::string hex() const { return hexEncode(view()); }
};

struct PublicKey {
    Bytes der;
    bool operator==(const PublicKey&) const = default;
    std::string text() const { return base64urlEncode(der); }
    static PublicKey fromText(std::string_view b64) { return PublicKey{base64urlDecode(b64)}; }
};

struct SecretKey {
    Bytes der;
    bool operator==(const SecretKey&) const = default;
};

struct Signature {
    Bytes der;
    bool operator==(const Signature&) const = default;
};

struct KeyPair {
    PublicKey pub;
    SecretKey sec;
};

namespace detail {

struct EvpPkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
using EvpPkey = std::unique_ptr<EVP_PKEY, EvpPkeyDeleter>;

struct EvpPkeyCtxDeleter {
    void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
using EvpPkeyCtx = std::unique_ptr<EVP_PKEY_CTX, EvpPkeyCtxDeleter>;

inline EvpPkey parsePublic(ByteView der) {
    const unsigned char* p = der.data();
    EVP_PKEY* key = d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size()));
    return EvpPkey(key);
}

inline EvpPkey parseSecret(ByteView der) {
    const unsigned char* p = der.data();
    EVP_PKEY* key = d2i_PrivateKey(EVP_PKEY_EC, nullptr, &p, static_cast<long>(der.size()));
    return EvpPkey(key);
}

inline Bytes publicDer(EVP_PKEY* key) {
    int len = i2d_PUBKEY(key, nullptr);
    if (len <= 0) throw CryptoError("cannot encode public key");
    Bytes out(static_cast<std::size_t>(len));
    unsigned char* p = out.data();
    i2d_PUBKEY(key, &p);
    return out;
}

inline Bytes secretDer(EVP_PKEY* key) {
    int len = i2d_PrivateKey(key, nullptr);
    if (len <= 0) throw CryptoError("cannot encode secret key");
    Bytes out(static_cast<std::size_t>(len));
    unsigned char* p = out.data();
    i2d_PrivateKey(key, &p);
    return out;
}

}  // namespace detail

inline KeyPair generateKeyPair() {
    detail::EvpPkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_EC, nullptr));
    if (!ctx || EVP_PKEY_keygen_init(ctx.get()) <= 0 ||
        EVP_PKEY_CTX_set_ec_paramgen_curve_nid(ctx.get(), NID_X9_62_prime256v1) <= 0)
        throw CryptoError("keygen init failed");
    EVP_PKEY* raw = nullptr;
    if (EVP_PKEY_keygen(ctx.get(), &raw) <= 0) throw CryptoError("keygen failed");
    detail::EvpPkey key(raw);
    return KeyPair{PublicKey{detail::publicDer(key.get())}, SecretKey{detail::secretDer(key.get())}};
}

inline PublicKey publicKeyOf(const SecretKey& sk) {
    auto key = detail::parseSecret(sk.der);
    if (!key) throw CryptoError("malformed secret key");
    return PublicKey{detail::publicDer(key.get())};
}

inline Digest sha256(ByteView data) {
    Digest d;
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw CryptoError("sha256 failed");
    return d;
}

inline Signature sign(const SecretKey& sk, const Digest& digest) {
    auto key = detail::parseSecret(sk.der);
    if (!key) throw CryptoError("malformed secret key");
    detail::EvpPkeyCtx ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
    if (!ctx || EVP_PKEY_sign_init(ctx.get()) <= 0 ||
        EVP_PKEY_CTX_set_signature_md(ctx.get(), EVP_sha256()) <= 0)
        throw CryptoError("sign init failed");
    std::size_t len = 0;
    if (EVP_PKEY_sign(ctx.get(), nullptr, &len, digest.bytes.data(), digest.bytes.size()) <= 0)
        throw CryptoError("sign sizing failed");
    Bytes out(len);
    if (EVP_PKEY_sign(ctx.get(), out.data(), &len, digest.bytes.data(), digest.bytes.size()) <= 0)
        throw CryptoError("sign failed");
    out.resize(len);
    return Signature{std::move(out)};
}

// Malformed keys or signatures verify false rather than raising.
inline bool verify(const PublicKey& pk, const Digest& digest, const Signature& sig) {
    auto key = detail::parsePublic(pk.der);
    if (!key) {
        ERR_clear_error();
        return false;
    }
    detail::EvpPkeyCtx ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
    if (!ctx || EVP_PKEY_verify_init(ctx.get()) <= 0 ||
        EVP_PKEY_CTX_set_signature_md(ctx.get(), EVP_sha256()) <= 0) {
        ERR_clear_error();
        return false;
    }
    int rc = EVP_PKEY_verify(ctx.get(), sig.der.data(), sig.der.size(), digest.bytes.data(),
                             digest.bytes.size());
    if (rc != 1) ERR_clear_error();
    return rc == 1;
}

inline Bytes randomBytes(std::size_t n) {
    Bytes out(n);
    if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1)
        throw CryptoError("random generator failure");
    return out;
}

// Canonical value encodings for the primitive types; composite types add
// their own encodeValue overloads next to their definitions.
inline void encodeValue(Writer& w, const std::string& s) { w.stringField(s); }
inline void encodeValue(Writer& w, std::string_view s) { w.stringField(s); }
inline void encodeValue(Writer& w, std::int64_t v) { w.i64(v); }
inline void encodeValue(Writer& w, const Bytes& b) { w.bytesField(b); }
inline void encodeValue(Writer& w, const PublicKey& k) { w.bytesField(k.der); }
inline void encodeValue(Writer& w, const Signature& s) { w.bytesField(s.der); }
inline void encodeValue(Writer& w, const Digest& d) { w.bytesField(d.view()); }

template <typename T>
void encodeValue(Writer& w, const std::vector<T>& items) {
    w.count(items.size());
    for (const auto& item : items) encodeValue(w, item);
}

template <typename T>
Bytes canonicalEncode(const T& value) {
    Writer w;
    encodeValue(w, value);
    return w.take();
}

// Hash of a sequence of values. Each argument's canonical encoding is wrapped
// with its own length prefix so argument boundaries can never be confused.
template <typename... Ts>
Digest hashArgs(const Ts&... args) {
    Writer w;
    (w.bytesField(canonicalEncode(args)), ...);
    return sha256(w.data());
}

// Secret key file: scheme id byte followed by the length-prefixed key bytes.
inline Bytes encodeSecretKeyFile(const SecretKey& sk) {
    Writer w;
    w.u8(kSchemeEcdsaP256);
    w.bytesField(sk.der);
    return w.take();
}

inline SecretKey decodeSecretKeyFile(ByteView data) {
    Reader r(data);
    if (r.u8() != kSchemeEcdsaP256) throw EncodingError("unknown key scheme");
    SecretKey sk{r.bytesField()};
    r.expectEnd();
    if (!detail::parseSecret(sk.der)) throw CryptoError("malformed secret key");
    return sk;
}

}  // namespace vcred

#endif  // VCRED_CRYPTO_HPP
