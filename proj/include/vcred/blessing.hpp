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
// Blessings: certificate chains binding human-readable, hierarchically
// delegatable names to public keys. Each certificate's signature covers not
// just that certificate's contents but the whole chain leading up to it, so a
// certificate cannot be lifted out of one blessing and spliced into another.
// A blessing is only as good as its root: validation couples chain
// verification with recognition of the first certificate's (name, key) pair
// against the authorizer's root set, and with the caveats riding on every
// certificate of the chain.

#ifndef VCRED_BLESSING_HPP
#define VCRED_BLESSING_HPP

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcred/caveats.hpp"
#include "vcred/crypto.hpp"
#include "vcred/pattern.hpp"

namespace vcred {

inline constexpr std::size_t kMaxChainLength = 16;
inline constexpr std::string_view kBlessingTextPrefix = "vbless1:";

struct Certificate {
    std::string name;  // single component: non-empty, no "/", not a reserved token
    PublicKey publicKey;
    std::vector<Caveat> caveats;
    Signature signature;

    bool operator==(const Certificate&) const = default;
};

inline void encodeValue(Writer& w, const Certificate& c) {
    w.stringField(c.name);
    w.bytesField(c.publicKey.der);
    encodeValue(w, c.caveats);
    w.bytesField(c.signature.der);
}

inline void encodeValue(Writer& w, std::span<const Certificate> chain) {
    w.count(chain.size());
    for (const auto& c : chain) encodeValue(w, c);
}

struct Blessing {
    std::vector<Certificate> chain;  // non-empty; first certificate is the root

    bool operator==(const Blessing&) const = default;
};

inline void encodeValue(Writer& w, const Blessing& b) {
    encodeValue(w, std::span<const Certificate>(b.chain));
}

inline std::string fullName(const Blessing& b) {
    std::string out;
    for (std::size_t i = 0; i < b.chain.size(); ++i) {
        if (i) out += '/';
        out += b.chain[i].name;
    }
    return out;
}

inline NameComponents nameComponents(const Blessing& b) {
    NameComponents out;
    out.reserve(b.chain.size());
    for (const auto& c : b.chain) out.push_back(c.name);
    return out;
}

inline const PublicKey& boundKey(const Blessing& b) {
    if (b.chain.empty()) throw Error("empty blessing");
    return b.chain.back().publicKey;
}

struct Root {
    std::string name;
    PublicKey key;

    bool operator==(const Root&) const = default;
    auto operator<=>(const Root& o) const {
        if (auto c = name <=> o.name; c != 0) return c;
        return key.der <=> o.key.der;
    }
};

inline Root root(const Blessing& b) {
    if (b.chain.empty()) throw Error("empty blessing");
    return Root{b.chain[0].name, b.chain[0].publicKey};
}

// The set of (name, key) pairs a principal accepts as identity providers.
// Recognition is exact: the same name under a different key is a forgery, not
// a near-miss.
class RootSet {
public:
    // Returns true when newly added, false when already present.
    bool add(Root r) {
        if (contains(r)) return false;
        entries_.push_back(std::move(r));
        std::sort(entries_.begin(), entries_.end());
        return true;
    }

    bool contains(const Root& r) const {
        return std::binary_search(entries_.begin(), entries_.end(), r);
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Root>& entries() const { return entries_; }

private:
    std::vector<Root> entries_;  // kept sorted and unique
};

inline bool isRecognized(const Blessing& b, const RootSet& roots) {
    return !b.chain.empty() && roots.contains(root(b));
}

// Digest a certificate-to-be together with the chain it extends. The chain
// prefix is the first hash argument (absent entirely for a root certificate),
// which is what pins every certificate to its position.
inline Digest certificateDigest(std::span<const Certificate> prefix, const std::string& name,
                                const PublicKey& pk, const std::vector<Caveat>& caveats) {
    if (prefix.empty()) return hashArgs(name, pk, caveats);
    return hashArgs(prefix, name, pk, caveats);
}

inline bool chainStructureOk(const Blessing& b) {
    if (b.chain.empty() || b.chain.size() > kMaxChainLength) return false;
    for (const auto& c : b.chain)
        if (!isValidNameComponent(c.name)) return false;
    return true;
}

inline bool verifyCerts(const Blessing& b) {
    if (!chainStructureOk(b)) return false;
    std::span<const Certificate> chain(b.chain);
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const Certificate& c = chain[i];
        Digest d = certificateDigest(chain.first(i), c.name, c.publicKey, c.caveats);
        const PublicKey& signer = i == 0 ? c.publicKey : chain[i - 1].publicKey;
        if (!verify(signer, d, c.signature)) return false;
    }
    return true;
}

// A one-certificate, self-signed blessing: how identity providers (and
// anyone naming themselves) come into existence.
inline Blessing selfBlessing(const KeyPair& keys, std::string_view name,
                             std::vector<Caveat> caveats = {}) {
    std::string n(name);
    if (!isValidNameComponent(n)) throw ParseError("invalid blessing name \"" + n + "\"");
    Certificate c{n, keys.pub, std::move(caveats), {}};
    c.signature = sign(keys.sec, certificateDigest({}, c.name, c.publicKey, c.caveats));
    return Blessing{{std::move(c)}};
}

// Extend blessing `b` (whose bound key must be sk's public key) onto
// `delegatePk` under the name extension. A multi-component extension becomes
// one certificate per component: the intermediate certificates re-bind the
// delegator's own key (still signed by sk, so the chain verifies link by
// link) and only the final certificate hands the name to the delegate. The
// supplied caveats ride on that final certificate.
inline Blessing bless(const PublicKey& delegatePk, const SecretKey& sk, const Blessing& b,
                      std::string_view extension, std::vector<Caveat> caveats) {
    NameComponents parts = splitBlessingName(extension);  // validates each component
    if (b.chain.empty()) throw Error("cannot extend an empty blessing");
    if (b.chain.size() + parts.size() > kMaxChainLength)
        throw Error("blessing chain would exceed the length limit");

    // Authority check, eagerly: a probe signature under sk must verify
    // against the blessing's bound key.
    Digest probe = sha256(toBytes("delegation authority probe"));
    if (!verify(boundKey(b), probe, sign(sk, probe)))
        throw AuthorityError("secret key does not match the blessing's bound key");

    PublicKey selfPk = publicKeyOf(sk);
    Blessing out = b;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        bool last = i + 1 == parts.size();
        Certificate c{parts[i], last ? delegatePk : selfPk,
                      last ? std::move(caveats) : std::vector<Caveat>{}, {}};
        c.signature = sign(
            sk, certificateDigest(std::span<const Certificate>(out.chain), c.name, c.publicKey,
                                  c.caveats));
        out.chain.push_back(std::move(c));
    }
    return out;
}

// ---- Serialized form ----

inline Bytes encodeBlessing(const Blessing& b) { return canonicalEncode(b); }

inline Blessing decodeBlessing(ByteView data) {
    Reader r(data);
    std::uint32_t n = r.count();
    if (n == 0) throw EncodingError("blessing with empty chain");
    if (n > kMaxChainLength) throw EncodingError("blessing chain too long");
    Blessing b;
    b.chain.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Certificate c;
        c.name = r.stringField();
        if (!isValidNameComponent(c.name))
            throw EncodingError("invalid certificate name \"" + c.name + "\"");
        c.publicKey = PublicKey{r.bytesField()};
        c.caveats = decodeCaveatList(r);
        c.signature = Signature{r.bytesField()};
        b.chain.push_back(std::move(c));
    }
    r.expectEnd();
    return b;
}

inline std::string blessingText(const Blessing& b) {
    return std::string(kBlessingTextPrefix) + base64urlEncode(encodeBlessing(b));
}

inline Blessing parseBlessingText(std::string_view text) {
    if (!text.starts_with(kBlessingTextPrefix))
        throw ParseError("blessing text must start with \"vbless1:\"");
    return decodeBlessing(base64urlDecode(text.substr(kBlessingTextPrefix.size())));
}

// ---- Validation ----

inline std::vector<Caveat> allCaveats(const Blessing& b) {
    std::vector<Caveat> out;
    for (const auto& c : b.chain) out.insert(out.end(), c.caveats.begin(), c.caveats.end());
    return out;
}

// Full decision on a presented blessing: chain verification, root
// recognition, then caveat validation over every caveat on the chain. The
// result names the failing conjunct so callers can audit and report
// precisely.
struct ValidationResult {
    enum class Failure : std::uint8_t { None = 0, InvalidChain, UnrecognizedRoot, CaveatFailed };

    Failure failure = Failure::None;
    bool unrecognizedCaveat = false;  // set when the caveat failure was an unknown type
    std::string diagnostic;

    bool ok() const { return failure == Failure::None; }
    explicit operator bool() const { return ok(); }
};

inline ValidationResult validateBlessing(const Blessing& b, const RootSet& roots,
                                         const RequestContext& con,
                                         const CaveatRegistry& reg = CaveatRegistry::global()) {
    ValidationResult res;
    if (!verifyCerts(b)) {
        res.failure = ValidationResult::Failure::InvalidChain;
        res.diagnostic = "certificate chain does not verify";
        return res;
    }
    if (!isRecognized(b, roots)) {
        res.failure = ValidationResult::Failure::UnrecognizedRoot;
        res.diagnostic = "root \"" + b.chain[0].name + "\" is not recognized";
        return res;
    }
    CaveatCheck cavs = validateCaveats(allCaveats(b), con, reg);
    if (!cavs.ok) {
        res.failure = ValidationResult::Failure::CaveatFailed;
        res.unrecognizedCaveat = cavs.unrecognized;
        res.diagnostic = cavs.diagnostic;
        return res;
    }
    return res;
}

}  // namespace vcred

#endif  // VCRED_BLESSING_HPP
