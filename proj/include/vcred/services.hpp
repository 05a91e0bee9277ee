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
// The discharge and group services, and their client sides.
//
// Both are raw endpoints on a Server rather than ordinary methods: their
// requests and replies have their own frame types and their denial responses
// must be protocol-shaped (a refusal reply, an unknown-group reply) rather
// than the generic access-denied reply.

#ifndef VCRED_SERVICES_HPP
#define VCRED_SERVICES_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vcred/channel.hpp"
#include "vcred/groups.hpp"
#include "vcred/store.hpp"

namespace vcred {

// ---- discharge protocol ----

// The requester tells the discharger which caveat it wants discharged and
// what it claims it is about to do; the claimed attributes feed the check
// caveat's validation context (a Method check constrains them, for example).
struct DischargeRequest {
    ThirdPartyCaveat tc;
    std::string method;
    std::string suffix;
};

inline Bytes encodeDischargeRequest(const DischargeRequest& dr) {
    Writer w;
    w.bytesField(canonicalEncode(dr.tc));
    w.stringField(dr.method);
    w.stringField(dr.suffix);
    return w.take();
}

inline DischargeRequest decodeDischargeRequest(ByteView payload) {
    Reader r(payload);
    DischargeRequest dr;
    Reader tr(r.bytesField());
    dr.tc = decodeThirdPartyCaveatBody(tr);
    tr.expectEnd();
    dr.method = r.stringField();
    dr.suffix = r.stringField();
    r.expectEnd();
    return dr;
}

struct DischargeReply {
    bool ok = false;
    Discharge discharge;     // when ok
    std::string diagnostic;  // when refused
};

inline Bytes encodeDischargeReply(const DischargeReply& rep) {
    Writer w;
    w.u8(rep.ok ? 1 : 0);
    if (rep.ok)
        w.bytesField(canonicalEncode(rep.discharge));
    else
        w.stringField(rep.diagnostic);
    return w.take();
}

inline DischargeReply decodeDischargeReply(ByteView payload) {
    Reader r(payload);
    DischargeReply rep;
    std::uint8_t ok = r.u8();
    if (ok > 1) throw EncodingError("bad discharge reply flag");
    rep.ok = ok == 1;
    if (rep.ok) {
        Reader dr(r.bytesField());
        rep.discharge = decodeDischarge(dr);
        dr.expectEnd();
    } else {
        rep.diagnostic = r.stringField();
    }
    r.expectEnd();
    return rep;
}

// ---- revocation ----

// A caveat that holds while its token is absent from the discharger's
// revocation list. It only ever appears as the check inside a third-party
// caveat: the list lives with the discharger, so only the discharger can
// evaluate it.
inline constexpr std::uint8_t kCaveatNotRevoked = kCaveatUserBase;

inline Caveat notRevokedCaveat(const std::string& token) {
    if (token.empty() || token.find('\n') != std::string::npos)
        throw Error("revocation token must be a non-empty single line");
    return Caveat{kCaveatNotRevoked, canonicalEncode(token)};
}

// One token per line. Every read goes to the file, so a revocation takes
// effect on the next discharge request with no process restart.
class RevocationList {
public:
    explicit RevocationList(std::filesystem::path path) : path_(std::move(path)) {}

    const std::filesystem::path& path() const { return path_; }

    bool contains(const std::string& token) const {
        std::lock_guard lock(mu_);
        for (const auto& t : readLocked())
            if (t == token) return true;
        return false;
    }

    void add(const std::string& token) {
        if (token.empty() || token.find('\n') != std::string::npos)
            throw Error("revocation token must be a non-empty single line");
        std::lock_guard lock(mu_);
        std::vector<std::string> tokens = readLocked();
        if (std::find(tokens.begin(), tokens.end(), token) != tokens.end()) return;
        tokens.push_back(token);
        writeLocked(tokens);
    }

    void remove(const std::string& token) {
        std::lock_guard lock(mu_);
        std::vector<std::string> tokens = readLocked();
        std::erase(tokens, token);
        writeLocked(tokens);
    }

    std::vector<std::string> entries() const {
        std::lock_guard lock(mu_);
        return readLocked();
    }

private:
    std::vector<std::string> readLocked() const {
        std::vector<std::string> out;
        if (!std::filesystem::exists(path_)) return out;
        std::string text = readFileText(path_);
        std::size_t start = 0;
        while (start < text.size()) {
            std::size_t nl = text.find('\n', start);
            std::string line = text.substr(start, nl == std::string::npos ? nl : nl - start);
            if (!line.empty()) out.push_back(std::move(line));
            if (nl == std::string::npos) break;
            start = nl + 1;
        }
        return out;
    }

    void writeLocked(const std::vector<std::string>& tokens) const {
        std::string text;
        for (const auto& t : tokens) text += t + "\n";
        writeFileAtomic(path_, std::string_view(text));
    }

    mutable std::mutex mu_;
    std::filesystem::path path_;
};

inline void registerNotRevokedValidator(CaveatRegistry& reg,
                                        std::shared_ptr<const RevocationList> list) {
    reg.registerValidator(kCaveatNotRevoked, [list](ByteView payload, const RequestContext&,
                                                    std::string* diag) {
        Reader r(payload);
        std::string token = r.stringField();
        r.expectEnd();
        if (!list->contains(token)) return true;
        if (diag) *diag = "token has been revoked";
        return false;
    });
}

// ---- discharge service ----

struct DischargeServiceOptions {
    std::int64_t lifetimeSeconds = 300;  // Expiry placed on every minted discharge
    std::string revocationPath;          // empty: no revocation checking offered
    // Extra gate on top of the check caveat; refusing sets the diagnostic.
    std::function<bool(const DischargeRequest&, const CallRequest&, std::string* diag)> approve;
};

// Registers the discharge endpoint on `srv`. Minting signs with the server's
// current identity key, and the check caveat is validated against a registry
// returned to the caller for further service-defined registrations. The
// embedding policy must carry an ACL for the pseudo-method "Discharge".
inline std::shared_ptr<CaveatRegistry> installDischargeService(Server& srv,
                                                               DischargeServiceOptions opts) {
    struct State {
        DischargeServiceOptions opts;
        std::shared_ptr<CaveatRegistry> registry = std::make_shared<CaveatRegistry>();
    };
    auto state = std::make_shared<State>();
    state->opts = std::move(opts);
    if (!state->opts.revocationPath.empty())
        registerNotRevokedValidator(
            *state->registry,
            std::make_shared<const RevocationList>(state->opts.revocationPath));

    Server::RawEndpoint ep;
    ep.pseudoMethod = "Discharge";
    ep.handler = [state, &srv](SecureChannel& chan, CallRequest& req) {
        DischargeReply rep;
        try {
            DischargeRequest dr = decodeDischargeRequest(req.args);
            RequestContext con = req.con;
            con.method = dr.method;
            con.suffix = dr.suffix;
            if (state->opts.approve) {
                std::string diag;
                if (!state->opts.approve(dr, req, &diag))
                    throw RefusalError("discharge refused: " +
                                       (diag.empty() ? "not approved" : diag));
            }
            std::vector<Caveat> lifetime{
                expiryCaveat(con.timestamp + state->opts.lifetimeSeconds)};
            rep.discharge = mintDischarge(srv.identity()->keys.sec, dr.tc, std::move(lifetime),
                                          con, *state->registry);
            rep.ok = true;
        } catch (const std::exception& e) {
            rep = DischargeReply{false, {}, e.what()};
        }
        chan.send(kMsgDischargeReply, encodeDischargeReply(rep));
    };
    ep.onDenied = [](SecureChannel& chan) {
        chan.send(kMsgDischargeReply,
                  encodeDischargeReply({false, {}, "discharge refused: access denied"}));
    };
    srv.setRawEndpoint(kMsgDischargeRequest, std::move(ep));
    return state->registry;
}

// ---- discharge client ----

// Ask the caveat's discharger for a discharge, claiming the given request
// attributes. The dial never recurses into discharge fetching for our own
// presented blessings.
inline Discharge fetchDischarge(const ThirdPartyCaveat& tc, Principal& principal,
                                const std::string& method = "", const std::string& suffix = "",
                                DialOptions opts = {}) {
    opts.fetcher = nullptr;
    opts.expectedServerKey = tc.dischargerKey;
    Channel ch = Channel::dialAuthenticated(tc.location, principal, opts);
    Frame f = ch.exchange(kMsgDischargeRequest, encodeDischargeRequest({tc, method, suffix}));
    if (f.type != kMsgDischargeReply) throw NetError("unexpected reply to a discharge request");
    DischargeReply rep = decodeDischargeReply(f.payload);
    if (!rep.ok) throw RefusalError(rep.diagnostic);
    return rep.discharge;
}

// Keeps fetched discharges until their earliest Expiry caveat; a discharge
// with no Expiry never expires from the cache.
class DischargeCache {
public:
    explicit DischargeCache(Clock clock = systemClock()) : clock_(std::move(clock)) {}

    std::optional<Discharge> lookup(const ThirdPartyCaveat& tc) {
        std::lock_guard lock(mu_);
        auto it = entries_.find(hexEncode(caveatKey(tc).view()));
        if (it == entries_.end()) return std::nullopt;
        if (it->second.notAfter && clock_() > *it->second.notAfter) {
            entries_.erase(it);
            return std::nullopt;
        }
        return it->second.discharge;
    }

    void put(const ThirdPartyCaveat& tc, const Discharge& d) {
        Entry e{d, std::nullopt};
        for (const Caveat& c : d.caveats) {
            if (c.typeId != kCaveatExpiry) continue;
            try {
                Reader r(c.payload);
                std::int64_t notAfter = r.i64();
                r.expectEnd();
                if (!e.notAfter || notAfter < *e.notAfter) e.notAfter = notAfter;
            } catch (const Error&) {
                // unreadable expiry: let validation reject it later
            }
        }
        std::lock_guard lock(mu_);
        entries_[hexEncode(caveatKey(tc).view())] = std::move(e);
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    struct Entry {
        Discharge discharge;
        std::optional<std::int64_t> notAfter;
    };
    Clock clock_;
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
};

// Fetcher for DialOptions: cache first, then the network. Fetch failures
// surface as a missing discharge (with the diagnostic), never as an abort —
// the peer is the one entitled to reject the resulting presentation.
inline DischargeFetcher makeDischargeFetcher(Principal& principal, DialOptions dialOpts,
                                             DischargeCache* cache, std::string method = "",
                                             std::string suffix = "") {
    return [&principal, dialOpts, cache, method, suffix](const ThirdPartyCaveat& tc,
                                                         std::string* diag) {
        if (cache) {
            if (auto d = cache->lookup(tc)) return std::optional<Discharge>(std::move(*d));
        }
        try {
            Discharge d = fetchDischarge(tc, principal, method, suffix, dialOpts);
            if (cache) cache->put(tc, d);
            return std::optional<Discharge>(std::move(d));
        } catch (const std::exception& e) {
            if (diag) *diag = e.what();
            return std::optional<Discharge>();
        }
    };
}

// ---- group protocol ----

struct GroupQuery {
    std::string group;
    std::string name;  // blessing name, text form
    Mode mode = Mode::Under;
    std::set<std::string> visited;
};

inline Bytes encodeGroupQuery(const GroupQuery& q) {
    Writer w;
    w.stringField(q.group);
    w.stringField(q.name);
    w.u8(static_cast<std::uint8_t>(q.mode));
    w.count(q.visited.size());
    for (const auto& g : q.visited) w.stringField(g);
    return w.take();
}

inline GroupQuery decodeGroupQuery(ByteView payload) {
    Reader r(payload);
    GroupQuery q;
    q.group = r.stringField();
    q.name = r.stringField();
    std::uint8_t m = r.u8();
    if (m > 1) throw EncodingError("bad group query mode");
    q.mode = static_cast<Mode>(m);
    std::uint32_t n = r.count();
    for (std::uint32_t i = 0; i < n; ++i) q.visited.insert(r.stringField());
    r.expectEnd();
    return q;
}

inline Bytes encodeGroupResult(const RemainderSet& rs) {
    Writer w;
    w.count(rs.consumed.size());
    for (std::size_t k : rs.consumed) w.u32(static_cast<std::uint32_t>(k));
    w.u8(rs.approximated ? 1 : 0);
    return w.take();
}

inline RemainderSet decodeGroupResult(ByteView payload) {
    Reader r(payload);
    RemainderSet rs;
    std::uint32_t n = r.count();
    for (std::uint32_t i = 0; i < n; ++i) rs.consumed.insert(r.u32());
    std::uint8_t a = r.u8();
    if (a > 1) throw EncodingError("bad approximation flag");
    rs.approximated = a == 1;
    r.expectEnd();
    return rs;
}

// ---- group client ----

// Resolves groups by dialing the server registered for each group name. Any
// failure — no registry entry, unreachable server, unknown group, a garbled
// reply — degrades to the mode's approximation, never to an error.
class NetworkResolver : public GroupResolver {
public:
    NetworkResolver(std::map<std::string, std::string> registry, Principal& principal,
                    DialOptions opts = {})
        : registry_(std::move(registry)), principal_(&principal), opts_(std::move(opts)) {}

    RemainderSet remainders(const std::string& group, std::span<const std::string> name,
                            Mode mode, const std::set<std::string>& visited) override {
        auto it = registry_.find(group);
        if (it == registry_.end()) return approximateAll(name.size(), mode);
        try {
            Channel ch = Channel::dialAuthenticated(it->second, *principal_, opts_);
            GroupQuery q{group, joinName(name), mode, visited};
            Frame f = ch.exchange(kMsgGroupQuery, encodeGroupQuery(q));
            if (f.type != kMsgGroupResult) return approximateAll(name.size(), mode);
            RemainderSet rs = decodeGroupResult(f.payload);
            std::erase_if(rs.consumed,
                          [&](std::size_t k) { return k == 0 || k > name.size(); });
            return rs;
        } catch (const std::exception&) {
            return approximateAll(name.size(), mode);
        }
    }

private:
    std::map<std::string, std::string> registry_;
    Principal* principal_;
    DialOptions opts_;
};

// ---- group service ----

struct GroupServiceOptions {
    // Where to send sub-queries for groups nested in our definitions but not
    // defined here. Empty registry: foreign groups are unreachable.
    std::map<std::string, std::string> registry;
    DialOptions dial;
};

// Registers the group-query endpoint on `srv`, answering from `defs` with
// server-side recursion: nested foreign groups are resolved by dialing their
// registered servers, carrying the query's visited set so that definition
// cycles spanning servers still terminate. The embedding policy must carry an
// ACL for the pseudo-method "GroupQuery".
inline void installGroupService(Server& srv, std::vector<GroupDefinition> defs,
                                Principal& principal, GroupServiceOptions opts = {}) {
    struct State {
        NetworkResolver network;
        LocalResolver local;
        State(std::vector<GroupDefinition> d, Principal& p, GroupServiceOptions o)
            : network(std::move(o.registry), p, std::move(o.dial)),
              local(std::move(d), &network) {}
    };
    auto state = std::make_shared<State>(std::move(defs), principal, std::move(opts));

    Server::RawEndpoint ep;
    ep.pseudoMethod = "GroupQuery";
    ep.handler = [state](SecureChannel& chan, CallRequest& req) {
        GroupQuery q;
        NameComponents comps;
        try {
            q = decodeGroupQuery(req.args);
            comps = splitBlessingName(q.name);
        } catch (const Error&) {
            chan.sendClose(CloseCode::ProtocolError);
            return;
        }
        if (!state->local.defines(q.group)) {
            Writer w;
            w.stringField(q.group);
            chan.send(kMsgGroupUnknown, w.data());
            return;
        }
        RemainderSet rs = state->local.remainders(q.group, comps, q.mode, q.visited);
        chan.send(kMsgGroupResult, encodeGroupResult(rs));
    };
    ep.onDenied = [](SecureChannel& chan) {
        // An unauthorized querier learns nothing about the definition, not
        // even whether it exists here.
        Writer w;
        w.stringField("");
        chan.send(kMsgGroupUnknown, w.data());
    };
    srv.setRawEndpoint(kMsgGroupQuery, std::move(ep));
}

}  // namespace vcred

#endif  // VCRED_SERVICES_HPP
