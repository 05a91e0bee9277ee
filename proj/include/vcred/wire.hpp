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
//
// Wire protocol: length-prefixed frames (4-byte big-endian length over a
// 1-byte type plus payload, 1 MiB cap) and the crypto for the authenticated
// channel — P-256 ECDH agreement, HKDF-SHA256 key derivation, and AES-256-GCM
// sealed frames with per-direction keys and sequence-derived nonces.

#ifndef VCRED_WIRE_HPP
#define VCRED_WIRE_HPP

#include <cstdint>
#include <optional>
#include <string>

#include <openssl/evp.h>
#include <openssl/kdf.h>

#include "vcred/crypto.hpp"
#include "vcred/net.hpp"

namespace vcred {

// Frame types.
inline constexpr std::uint8_t kMsgHello = 0x01;
inline constexpr std::uint8_t kMsgServerAuth = 0x02;
inline constexpr std::uint8_t kMsgClientAuth = 0x03;
inline constexpr std::uint8_t kMsgCall = 0x04;
inline constexpr std::uint8_t kMsgReply = 0x05;
inline constexpr std::uint8_t kMsgDischargeRequest = 0x06;
inline constexpr std::uint8_t kMsgDischargeReply = 0x07;
inline constexpr std::uint8_t kMsgGroupQuery = 0x08;
inline constexpr std::uint8_t kMsgGroupResult = 0x09;
inline constexpr std::uint8_t kMsgGrant = 0x0a;
inline constexpr std::uint8_t kMsgGroupUnknown = 0x0b;
inline constexpr std::uint8_t kMsgClose = 0x0f;

// CLOSE payload codes.
enum class CloseCode : std::uint8_t {
    Normal = 0,
    ProtocolError = 1,
    Unauthenticated = 2,  // peer presented no blessing that validates
    Unauthorized = 3,     // validated, but the connect policy said no
    Timeout = 4,
    Internal = 5,
};

inline std::string_view closeCodeName(CloseCode c) {
    switch (c) {
        case CloseCode::Normal: return "normal close";
        case CloseCode::ProtocolError: return "protocol error";
        case CloseCode::Unauthenticated: return "unauthenticated";
        case CloseCode::Unauthorized: return "unauthorized";
        case CloseCode::Timeout: return "timeout";
        case CloseCode::Internal: return "internal error";
    }
    return "unknown";
}

inline constexpr std::size_t kMaxFrameSize = 1 << 20;  // type byte + payload

struct Frame {
    std::uint8_t type = 0;
    Bytes payload;
};

inline void writeFrame(const Socket& s, std::uint8_t type, ByteView payload) {
    if (payload.size() + 1 > kMaxFrameSize) throw NetError("frame too large");
    Writer w;
    w.u32(static_cast<std::uint32_t>(payload.size() + 1));
    w.u8(type);
    w.raw(payload);
    Bytes buf = w.take();
    s.writeFully(buf.data(), buf.size());
}

inline Frame readFrame(const Socket& s) {
    std::uint8_t lenBuf[4];
    s.readFully(lenBuf, 4);
    std::uint32_t len = (std::uint32_t(lenBuf[0]) << 24) | (std::uint32_t(lenBuf[1]) << 16) |
                        (std::uint32_t(lenBuf[2]) << 8) | std::uint32_t(lenBuf[3]);
    if (len < 1 || len > kMaxFrameSize) throw NetError("bad frame length");
    Frame f;
    f.payload.resize(len - 1);
    s.readFully(&f.type, 1);
    if (!f.payload.empty()) s.readFully(f.payload.data(), f.payload.size());
    return f;
}

inline void writeClose(const Socket& s, CloseCode code) {
    Writer w;
    w.u8(static_cast<std::uint8_t>(code));
    try {
        writeFrame(s, kMsgClose, w.data());
    } catch (const NetError&) {
        // peer may already be gone; a lost close is harmless
    }
}

// Raised when the peer closes the conversation with a typed CLOSE frame.
class ClosedError : public NetError {
public:
    explicit ClosedError(CloseCode code)
        : NetError("peer closed connection: " + std::string(closeCodeName(code))), code_(code) {}
    CloseCode code() const { return code_; }

private:
    CloseCode code_;
};

// ---- Channel crypto ----

inline constexpr std::size_t kGcmNonceSize = 12;
inline constexpr std::size_t kGcmTagSize = 16;
inline constexpr std::string_view kChannelKdfInfo = "vcred/channel/v1";

namespace detail {

inline Bytes ecdhSharedSecret(const SecretKey& mine, const PublicKey& theirs) {
    EvpPkey sk = parseSecret(mine.der);
    EvpPkey pk = parsePublic(theirs.der);
    if (!sk || !pk) throw CryptoError("malformed key in agreement");
    EvpPkeyCtx ctx(EVP_PKEY_CTX_new(sk.get(), nullptr));
    if (!ctx || EVP_PKEY_derive_init(ctx.get()) <= 0 ||
        EVP_PKEY_derive_set_peer(ctx.get(), pk.get()) <= 0)
        throw CryptoError("agreement init failed");
    std::size_t len = 0;
    if (EVP_PKEY_derive(ctx.get(), nullptr, &len) <= 0) throw CryptoError("agreement sizing failed");
    Bytes out(len);
    if (EVP_PKEY_derive(ctx.get(), out.data(), &len) <= 0) throw CryptoError("agreement failed");
    out.resize(len);
    return out;
}

inline Bytes hkdfSha256(ByteView secret, ByteView salt, std::string_view info, std::size_t outLen) {
    EvpPkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
    if (!ctx || EVP_PKEY_derive_init(ctx.get()) <= 0 ||
        EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()) <= 0 ||
        EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.data(), static_cast<int>(salt.size())) <= 0 ||
        EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), secret.data(), static_cast<int>(secret.size())) <= 0 ||
        EVP_PKEY_CTX_add1_hkdf_info(ctx.get(),
                                    reinterpret_cast<const unsigned char*>(info.data()),
                                    static_cast<int>(info.size())) <= 0)
        throw CryptoError("hkdf init failed");
    Bytes out(outLen);
    std::size_t len = outLen;
    if (EVP_PKEY_derive(ctx.get(), out.data(), &len) <= 0 || len != outLen)
        throw CryptoError("hkdf failed");
    return out;
}

struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

}  // namespace detail

inline Bytes aesGcmSeal(ByteView key32, ByteView nonce12, ByteView aad, ByteView plaintext) {
    detail::CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key32.data(),
                                   nonce12.data()) != 1)
        throw CryptoError("seal init failed");
    int len = 0;
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw CryptoError("seal aad failed");
    Bytes out(plaintext.size() + kGcmTagSize);
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        throw CryptoError("seal failed");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1)
        throw CryptoError("seal finalize failed");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kGcmTagSize,
                            out.data() + plaintext.size()) != 1)
        throw CryptoError("seal tag failed");
    return out;
}

inline std::optional<Bytes> aesGcmOpen(ByteView key32, ByteView nonce12, ByteView aad,
                                       ByteView sealed) {
    if (sealed.size() < kGcmTagSize) return std::nullopt;
    std::size_t ctLen = sealed.size() - kGcmTagSize;
    detail::CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key32.data(),
                                   nonce12.data()) != 1)
        return std::nullopt;
    int len = 0;
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        return std::nullopt;
    Bytes out(ctLen);
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(ctLen)) != 1)
        return std::nullopt;
    Bytes tag(sealed.begin() + static_cast<std::ptrdiff_t>(ctLen), sealed.end());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kGcmTagSize, tag.data()) != 1)
        return std::nullopt;
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1) return std::nullopt;
    return out;
}

// Per-direction channel keys derived from the handshake: HKDF-SHA256 over the
// ECDH shared secret, salted with both nonces.
struct ChannelKeys {
    Bytes clientToServerKey;  // 32
    Bytes serverToClientKey;  // 32
    Bytes clientToServerIv;   // 12
    Bytes serverToClientIv;   // 12
};

inline ChannelKeys deriveChannelKeys(const SecretKey& myEphemeral, const PublicKey& peerEphemeral,
                                     ByteView clientNonce, ByteView serverNonce) {
    Bytes shared = detail::ecdhSharedSecret(myEphemeral, peerEphemeral);
    Bytes salt;
    salt.insert(salt.end(), clientNonce.begin(), clientNonce.end());
    salt.insert(salt.end(), serverNonce.begin(), serverNonce.end());
    Bytes okm = detail::hkdfSha256(shared, salt, kChannelKdfInfo, 88);
    ChannelKeys keys;
    keys.clientToServerKey.assign(okm.begin(), okm.begin() + 32);
    keys.serverToClientKey.assign(okm.begin() + 32, okm.begin() + 64);
    keys.clientToServerIv.assign(okm.begin() + 64, okm.begin() + 76);
    keys.serverToClientIv.assign(okm.begin() + 76, okm.begin() + 88);
    return keys;
}

// One direction of an encrypted channel. Nonce for sequence s is the static
// IV with s XOR-ed into its trailing 8 bytes; the frame type byte rides as
// AAD so it is authenticated even though it travels in the clear.
class SealedDirection {
public:
    SealedDirection() = default;
    SealedDirection(Bytes key, Bytes iv) : key_(std::move(key)), iv_(std::move(iv)) {}

    Bytes seal(std::uint8_t type, ByteView plaintext) {
        return aesGcmSeal(key_, nonce(seq_++), ByteView(&type, 1), plaintext);
    }

    std::optional<Bytes> open(std::uint8_t type, ByteView sealed) {
        return aesGcmOpen(key_, nonce(seq_++), ByteView(&type, 1), sealed);
    }

private:
    Bytes nonce(std::uint64_t seq) const {
        Bytes n = iv_;
        for (int i = 0; i < 8; ++i)
            n[kGcmNonceSize - 1 - i] ^= static_cast<std::uint8_t>(seq >> (8 * i));
        return n;
    }

    Bytes key_;
    Bytes iv_;
    std::uint64_t seq_ = 0;
};

// Encrypted frame transport over an established socket. Sequence numbers are
// implicit (strictly ordered TCP), so a dropped, reordered, or replayed frame
// simply fails to open.
class SecureChannel {
public:
    SecureChannel() = default;
    SecureChannel(Socket sock, SealedDirection send, SealedDirection recv)
        : sock_(std::move(sock)), send_(std::move(send)), recv_(std::move(recv)) {}

    void send(std::uint8_t type, ByteView payload) {
        writeFrame(sock_, type, send_.seal(type, payload));
    }

    // Throws ClosedError on a typed CLOSE from the peer.
    Frame receive() {
        Frame f = readFrame(sock_);
        auto plain = recv_.open(f.type, f.payload);
        if (!plain) throw NetError("frame failed to authenticate");
        f.payload = std::move(*plain);
        if (f.type == kMsgClose) {
            CloseCode code = CloseCode::ProtocolError;
            if (f.payload.size() == 1 && f.payload[0] <= 5)
                code = static_cast<CloseCode>(f.payload[0]);
            throw ClosedError(code);
        }
        return f;
    }

    void sendClose(CloseCode code) {
        Writer w;
        w.u8(static_cast<std::uint8_t>(code));
        try {
            send(kMsgClose, w.data());
        } catch (const NetError&) {
            // best effort
        }
    }

    Socket& socket() { return sock_; }
    const Socket& socket() const { return sock_; }

private:
    Socket sock_;
    SealedDirection send_;
    SealedDirection recv_;
};

}  // namespace vcred

#endif  // VCRED_WIRE_HPP
