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
// Caveats: restrictions carried on certificates that the authorizing end
// evaluates against the context of each request. First-party caveats are
// validated locally (expiry, method lists, peer patterns, weekly schedules,
// plus service-registered types). Third-party caveats name an outside
// discharger; they are satisfied by presenting a discharge — a signed
// statement from that discharger — which may itself carry caveats,
// recursively. Everything here fails closed: a caveat that cannot be decoded
// or dispatched makes validation false, never true.

#ifndef VCRED_CAVEATS_HPP
#define VCRED_CAVEATS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "vcred/crypto.hpp"
#include "vcred/pattern.hpp"

namespace vcred {

struct Blessing;  // defined in blessing.hpp; contexts reference the presented chain

// Caveat type identifiers (wire- and file-stable).
inline constexpr std::uint8_t kCaveatExpiry = 0x01;
inline constexpr std::uint8_t kCaveatMethod = 0x02;
inline constexpr std::uint8_t kCaveatPeer = 0x03;
inline constexpr std::uint8_t kCaveatWeeklySchedule = 0x04;
inline constexpr std::uint8_t kCaveatThirdParty = 0x7f;  // envelope for ThirdPartyCaveat
inline constexpr std::uint8_t kCaveatUserBase = 0x80;    // service-defined types live here and up

inline constexpr std::size_t kTpcNonceSize = 16;
inline constexpr int kMaxDischargeDepth = 8;

struct Caveat {
    std::uint8_t typeId = 0;
    Bytes payload;  // canonical encoding of the type's parameter value

    bool operator==(const Caveat&) const = default;
    bool isThirdParty() const { return typeId == kCaveatThirdParty; }
};

inline void encodeValue(Writer& w, const Caveat& c) {
    w.u8(c.typeId);
    w.bytesField(c.payload);
}

inline Caveat decodeCaveat(Reader& r) {
    Caveat c;
    c.typeId = r.u8();
    c.payload = r.bytesField();
    return c;
}

inline std::vector<Caveat> decodeCaveatList(Reader& r) {
    std::uint32_t n = r.count();
    std::vector<Caveat> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(decodeCaveat(r));
    return out;
}

// A third-party caveat: the nonce makes each minted instance unique, the key
// identifies the discharger, `check` is the condition the discharger will
// evaluate before issuing a discharge, and `location` is where to ask.
struct ThirdPartyCaveat {
    Bytes nonce;
    PublicKey dischargerKey;
    Caveat check;
    std::string location;

    bool operator==(const ThirdPartyCaveat&) const = default;
};

inline void encodeValue(Writer& w, const ThirdPartyCaveat& tc) {
    w.bytesField(tc.nonce);
    w.bytesField(tc.dischargerKey.der);
    encodeValue(w, tc.check);
    w.stringField(tc.location);
}

inline ThirdPartyCaveat decodeThirdPartyCaveatBody(Reader& r) {
    ThirdPartyCaveat tc;
    tc.nonce = r.bytesField();
    if (tc.nonce.size() != kTpcNonceSize) throw EncodingError("third-party caveat nonce size");
    tc.dischargerKey = PublicKey{r.bytesField()};
    tc.check = decodeCaveat(r);
    tc.location = r.stringField();
    return tc;
}

inline Caveat makeThirdPartyCaveat(const PublicKey& dischargerKey, Caveat check,
                                   std::string location) {
    ThirdPartyCaveat tc{randomBytes(kTpcNonceSize), dischargerKey, std::move(check),
                        std::move(location)};
    return Caveat{kCaveatThirdParty, canonicalEncode(tc)};
}

inline ThirdPartyCaveat decodeThirdPartyCaveat(const Caveat& c) {
    if (!c.isThirdParty()) throw EncodingError("not a third-party caveat");
    Reader r(c.payload);
    ThirdPartyCaveat tc = decodeThirdPartyCaveatBody(r);
    r.expectEnd();
    return tc;
}

// A discharge: the discharger's signature over the caveat it discharges and
// the restrictions the discharge itself carries.
struct Discharge {
    std::vector<Caveat> caveats;
    Signature signature;

    bool operator==(const Discharge&) const = default;
};

inline void encodeValue(Writer& w, const Discharge& d) {
    encodeValue(w, d.caveats);
    w.bytesField(d.signature.der);
}

inline Discharge decodeDischarge(Reader& r) {
    Discharge d;
    d.caveats = decodeCaveatList(r);
    d.signature = Signature{r.bytesField()};
    return d;
}

inline Digest dischargerDigest(const ThirdPartyCaveat& tc, const std::vector<Caveat>& dischargeCaveats) {
    return hashArgs(tc, dischargeCaveats);
}

inline bool verifyDischarge(const ThirdPartyCaveat& tc, const Discharge& d) {
    return verify(tc.dischargerKey, dischargerDigest(tc, d.caveats), d.signature);
}

// Key identifying which third-party caveat a discharge was fetched for; used
// only to index the context's discharges for quick lookup — validation always
// re-verifies the signature, so a mis-filed discharge can't grant anything.
inline Digest caveatKey(const ThirdPartyCaveat& tc) { return hashArgs(tc); }

class DischargeSet {
public:
    void add(const Discharge& d) { all_.push_back(d); }
    void add(const ThirdPartyCaveat& tc, const Discharge& d) {
        index_.emplace(caveatKey(tc).hex(), all_.size());
        all_.push_back(d);
    }

    bool empty() const { return all_.empty(); }
    std::size_t size() const { return all_.size(); }
    const std::vector<Discharge>& all() const { return all_; }

    // Indexed candidates first, then everything else: the index is a fast
    // path, never a filter.
    std::vector<const Discharge*> candidates(const ThirdPartyCaveat& tc) const {
        std::vector<const Discharge*> out;
        std::vector<bool> seen(all_.size(), false);
        auto [lo, hi] = index_.equal_range(caveatKey(tc).hex());
        for (auto it = lo; it != hi; ++it) {
            out.push_back(&all_[it->second]);
            seen[it->second] = true;
        }
        for (std::size_t i = 0; i < all_.size(); ++i)
            if (!seen[i]) out.push_back(&all_[i]);
        return out;
    }

private:
    std::vector<Discharge> all_;
    std::multimap<std::string, std::size_t> index_;
};

// Everything a caveat validator may consult about the request being decided.
// `timestamp` is the authorizer's clock (unix seconds); `localBlessingNames`
// are the names the authorizer itself is wielding (the Peer caveat checks
// these); `remoteBlessing` is the chain the requester presented.
struct RequestContext {
    std::int64_t timestamp = 0;
    std::string method;
    std::string suffix;
    std::vector<std::string> localBlessingNames;
    std::shared_ptr<const Blessing> remoteBlessing;
    DischargeSet discharges;
    std::string peerEndpoint;
    int utcOffsetMinutes = 0;        // zone in which WeeklySchedule windows are read
    std::int64_t clockSkewSeconds = 0;  // expiry slack; 0 unless a deployment opts in
};

namespace detail {

inline std::int64_t floorDiv(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if (a % b != 0 && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace detail

// Weekday of a unix timestamp with Monday = 0 (1970-01-01 was a Thursday).
inline int weekdayOf(std::int64_t unixSeconds) {
    std::int64_t days = detail::floorDiv(unixSeconds, 86400);
    return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

inline int hourOf(std::int64_t unixSeconds) {
    std::int64_t secs = unixSeconds - detail::floorDiv(unixSeconds, 86400) * 86400;
    return static_cast<int>(secs / 3600);
}

// ---- Built-in caveat constructors ----

inline Caveat expiryCaveat(std::int64_t notAfterUnixSeconds) {
    Writer w;
    w.i64(notAfterUnixSeconds);
    return Caveat{kCaveatExpiry, w.take()};
}

inline Caveat methodCaveat(const std::vector<std::string>& methods) {
    Writer w;
    encodeValue(w, methods);
    return Caveat{kCaveatMethod, w.take()};
}

// Peer patterns must be group-free: the caveat is evaluated wherever the
// blessing is presented, with no group infrastructure assumed.
inline Caveat peerCaveat(const std::vector<BlessingPattern>& patterns) {
    Writer w;
    w.count(patterns.size());
    for (const auto& p : patterns) {
        if (!p.isGroupFree()) throw ParseError("peer caveat patterns must not contain groups");
        w.stringField(p.text());
    }
    return Caveat{kCaveatPeer, w.take()};
}

inline Caveat weeklyScheduleCaveat(int weekday, int startHour, int endHour) {
    if (weekday < 0 || weekday > 6 || startHour < 0 || endHour > 24 || startHour >= endHour)
        throw ParseError("invalid weekly schedule window");
    Writer w;
    w.u8(static_cast<std::uint8_t>(weekday));
    w.u8(static_cast<std::uint8_t>(startHour));
    w.u8(static_cast<std::uint8_t>(endHour));
    return Caveat{kCaveatWeeklySchedule, w.take()};
}

// ---- Validation ----

struct CaveatCheck {
    bool ok = true;
    bool unrecognized = false;  // a caveat had no registered validator
    std::string diagnostic;     // empty when ok

    static CaveatCheck pass() { return {}; }
    static CaveatCheck fail(std::string diag, bool unrec = false) {
        return CaveatCheck{false, unrec, std::move(diag)};
    }
};

// Dispatch table from caveat type id to validator. A fresh registry carries
// the built-ins; services register their own types in the 0x80+ range at
// startup. Unknown ids validate false.
class CaveatRegistry {
public:
    using Validator =
        std::function<bool(ByteView payload, const RequestContext& con, std::string* diag)>;

    CaveatRegistry() {
        validators_[kCaveatExpiry] = [](ByteView payload, const RequestContext& con,
                                        std::string* diag) {
            Reader r(payload);
            std::int64_t notAfter = r.i64();
            r.expectEnd();
            if (con.timestamp <= notAfter + con.clockSkewSeconds) return true;
            if (diag)
                *diag = "expired at " + std::to_string(notAfter) + ", now " +
                        std::to_string(con.timestamp);
            return false;
        };
        validators_[kCaveatMethod] = [](ByteView payload, const RequestContext& con,
                                        std::string* diag) {
            Reader r(payload);
            std::uint32_t n = r.count();
            std::string listed;
            for (std::uint32_t i = 0; i < n; ++i) {
                std::string m = r.stringField();
                if (m == con.method) return true;
                listed += (listed.empty() ? "" : ",") + m;
            }
            r.expectEnd();
            if (diag) *diag = "method " + con.method + " not in [" + listed + "]";
            return false;
        };
        validators_[kCaveatPeer] = [](ByteView payload, const RequestContext& con,
                                      std::string* diag) {
            Reader r(payload);
            std::uint32_t n = r.count();
            std::vector<BlessingPattern> pats;
            for (std::uint32_t i = 0; i < n; ++i)
                pats.push_back(BlessingPattern::parse(r.stringField()));
            r.expectEnd();
            for (const auto& p : pats)
                for (const auto& bn : con.localBlessingNames) {
                    try {
                        if (matchPattern(p, bn, nullResolver(), Mode::Under)) return true;
                    } catch (const Error&) {
                        // unparseable local name: skip
                    }
                }
            if (diag) *diag = "no local blessing name matches the peer patterns";
            return false;
        };
        validators_[kCaveatWeeklySchedule] = [](ByteView payload, const RequestContext& con,
                                                std::string* diag) {
            Reader r(payload);
            int day = r.u8(), start = r.u8(), end = r.u8();
            r.expectEnd();
            std::int64_t local = con.timestamp + std::int64_t{con.utcOffsetMinutes} * 60;
            int h = hourOf(local);
            if (weekdayOf(local) == day && start <= h && h < end) return true;
            if (diag)
                *diag = "outside schedule (weekday " + std::to_string(day) + " " +
                        std::to_string(start) + "-" + std::to_string(end) + "h)";
            return false;
        };
    }

    static CaveatRegistry& global() {
        static CaveatRegistry reg;
        return reg;
    }

    // Service-defined caveat types live at 0x80 and above; ids below that are
    // fixed by this library, and re-registering an occupied id is an error
    // (there is no way to prove two validators are the same function).
    void registerValidator(std::uint8_t typeId, Validator v) {
        if (typeId < kCaveatUserBase)
            throw Error("caveat type ids below 0x80 are reserved");
        std::lock_guard lock(mu_);
        if (validators_.count(typeId)) throw Error("caveat type id already registered");
        validators_[typeId] = std::move(v);
    }

    CaveatCheck validateFirstParty(const Caveat& fc, const RequestContext& con) const {
        Validator v;
        {
            std::lock_guard lock(mu_);
            auto it = validators_.find(fc.typeId);
            if (it == validators_.end())
                return CaveatCheck::fail(
                    "unrecognized caveat type 0x" + hexEncode(ByteView(&fc.typeId, 1)), true);
            v = it->second;
        }
        std::string diag;
        try {
            if (v(fc.payload, con, &diag)) return CaveatCheck::pass();
        } catch (const std::exception& e) {
            return CaveatCheck::fail("caveat type 0x" + hexEncode(ByteView(&fc.typeId, 1)) +
                                     " malformed: " + e.what());
        }
        return CaveatCheck::fail("caveat type 0x" + hexEncode(ByteView(&fc.typeId, 1)) +
                                 " failed: " + (diag.empty() ? "unsatisfied" : diag));
    }

private:
    mutable std::mutex mu_;
    std::map<std::uint8_t, Validator> validators_;
};

inline bool validateFirstPartyCaveat(const Caveat& fc, const RequestContext& con,
                                     const CaveatRegistry& reg = CaveatRegistry::global(),
                                     std::string* diag = nullptr) {
    CaveatCheck c = reg.validateFirstParty(fc, con);
    if (!c.ok && diag) *diag = c.diagnostic;
    return c.ok;
}

class RefusalError : public Error {
public:
    using Error::Error;
};

class AuthorityError : public Error {
public:
    using Error::Error;
};

// Issue a discharge for `tc`, carrying `caveats` as restrictions on the
// discharge itself, provided tc's check validates in `con`. The signature
// covers both the caveat (nonce included) and the discharge's caveat list, so
// a discharge can neither be replayed against a different caveat nor have its
// restrictions stripped.
inline Discharge mintDischarge(const SecretKey& skTp, const ThirdPartyCaveat& tc,
                               std::vector<Caveat> caveats, const RequestContext& con,
                               const CaveatRegistry& reg = CaveatRegistry::global()) {
    if (publicKeyOf(skTp) != tc.dischargerKey)
        throw AuthorityError("secret key does not match the caveat's discharger key");
    CaveatCheck check = reg.validateFirstParty(tc.check, con);
    if (!check.ok) throw RefusalError("discharge refused: " + check.diagnostic);
    Signature sig = sign(skTp, dischargerDigest(tc, caveats));
    return Discharge{std::move(caveats), sig};
}

// Conjunction over a caveat list. Third-party caveats are satisfied by a
// discharge from the context that verifies under the caveat's discharger key
// and whose own caveats validate recursively (depth-capped).
inline CaveatCheck validateCaveats(const std::vector<Caveat>& clist, const RequestContext& con,
                                   const CaveatRegistry& reg = CaveatRegistry::global(),
                                   int depth = 0) {
    for (const Caveat& c : clist) {
        if (!c.isThirdParty()) {
            CaveatCheck r = reg.validateFirstParty(c, con);
            if (!r.ok) return r;
            continue;
        }
        if (depth >= kMaxDischargeDepth)
            return CaveatCheck::fail("discharge nesting exceeds depth limit");
        ThirdPartyCaveat tc;
        try {
            Reader r(c.payload);
            tc = decodeThirdPartyCaveatBody(r);
            r.expectEnd();
        } catch (const std::exception& e) {
            return CaveatCheck::fail(std::string("malformed third-party caveat: ") + e.what());
        }
        bool satisfied = false;
        std::string lastDiag = "no discharge presented";
        for (const Discharge* d : con.discharges.candidates(tc)) {
            if (!verifyDischarge(tc, *d)) continue;
            CaveatCheck inner = validateCaveats(d->caveats, con, reg, depth + 1);
            if (inner.ok) {
                satisfied = true;
                break;
            }
            lastDiag = "discharge invalid: " + inner.diagnostic;
        }
        if (!satisfied)
            return CaveatCheck::fail("third-party caveat (discharger at " + tc.location +
                                     ") unsatisfied: " + lastDiag);
    }
    return CaveatCheck::pass();
}

}  // namespace vcred

#endif  // VCRED_CAVEATS_HPP
