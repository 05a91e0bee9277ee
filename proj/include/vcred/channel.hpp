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
// Authenticated channels and the request/reply server.
//
// Handshake (one round trip, server reveals itself first):
//
//   client -> HELLO        { client ephemeral key, client nonce }
//   server -> SERVER_AUTH  { server ephemeral key, server nonce,
//                            sealed{ blessings, discharges, signature } }
//   client -> CLIENT_AUTH  { sealed{ blessings, discharges, signature } }
//
// Both sides derive AES-256-GCM keys from an ephemeral ECDH agreement; the
// sealed auth payloads consume sequence 0 of each direction and application
// frames continue from there. Each side signs a transcript digest covering
// both ephemerals and nonces (the client's also covers the server's sealed
// payload), which binds the signature to this channel: replaying a recorded
// handshake elsewhere fails because the ephemerals differ. The signature must
// verify under the public key every presented blessing is bound to — that is
// what proves the peer owns the names it is claiming.
//
// Either side aborts with a typed CLOSE if the peer's blessings do not
// validate or its names fail the local policy. No application data flows
// until both directions have passed.

#ifndef VCRED_CHANNEL_HPP
#define VCRED_CHANNEL_HPP

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vcred/audit.hpp"
#include "vcred/blessing.hpp"
#include "vcred/clock.hpp"
#include "vcred/groups.hpp"
#include "vcred/principal.hpp"
#include "vcred/wire.hpp"

namespace vcred {

inline constexpr std::string_view kServerAuthTag = "vcred/handshake/server/v1";
inline constexpr std::string_view kClientAuthTag = "vcred/handshake/client/v1";
inline constexpr std::size_t kMaxBlessingsPerHandshake = 8;
inline constexpr int kHandshakeTimeoutMillis = 10000;

enum class Status : std::uint8_t {
    Ok = 0,
    AccessDenied = 1,
    ApplicationError = 2,
    ProtocolError = 3,
};

struct Grant {
    Blessing blessing;
    BlessingPattern peerPatternHint;  // advisory: where the recipient should present it
};

struct Reply {
    Status status = Status::Ok;
    Bytes payload;
    std::vector<Grant> grants;

    static Reply ok(ByteView data = {}) { return Reply{Status::Ok, Bytes(data.begin(), data.end()), {}}; }
    static Reply okText(std::string_view text) { return ok(toBytes(text)); }
    static Reply error(Status s, std::string_view message) {
        return Reply{s, toBytes(message), {}};
    }
    std::string payloadText() const { return std::string(payload.begin(), payload.end()); }
};

// ---- handshake payload plumbing ----

namespace detail {

struct AuthPayload {
    std::vector<Blessing> blessings;
    std::vector<std::pair<Digest, Discharge>> discharges;  // (caveat key, discharge)
    Signature signature;
};

inline Bytes encodeAuthPayload(const AuthPayload& a) {
    Writer w;
    w.count(a.blessings.size());
    for (const auto& b : a.blessings) w.bytesField(encodeBlessing(b));
    w.count(a.discharges.size());
    for (const auto& [key, d] : a.discharges) {
        w.bytesField(key.view());
        w.bytesField(canonicalEncode(d));
    }
    w.bytesField(a.signature.der);
    return w.take();
}

inline AuthPayload decodeAuthPayload(ByteView data) {
    Reader r(data);
    AuthPayload a;
    std::uint32_t nb = r.count();
    if (nb == 0 || nb > kMaxBlessingsPerHandshake)
        throw EncodingError("handshake must present between 1 and 8 blessings");
    for (std::uint32_t i = 0; i < nb; ++i) a.blessings.push_back(decodeBlessing(r.bytesField()));
    std::uint32_t nd = r.count();
    for (std::uint32_t i = 0; i < nd; ++i) {
        Bytes keyBytes = r.bytesField();
        Digest key;
        if (keyBytes.size() != key.bytes.size()) throw EncodingError("bad discharge key digest");
        std::copy(keyBytes.begin(), keyBytes.end(), key.bytes.begin());
        Reader dr(r.bytesField());
        Discharge d = decodeDischarge(dr);
        dr.expectEnd();
        a.discharges.emplace_back(key, std::move(d));
    }
    a.signature = Signature{r.bytesField()};
    r.expectEnd();
    return a;
}

inline Digest handshakeTranscript(const Bytes& clientEph, const Bytes& clientNonce,
                                  const Bytes& serverEph, const Bytes& serverNonce) {
    return hashArgs(clientEph, clientNonce, serverEph, serverNonce);
}

// All presented blessings must be bound to one key, and every chain must
// verify. Returns that key.
inline PublicKey checkPresentedBlessings(const std::vector<Blessing>& blessings) {
    PublicKey pk = boundKey(blessings.front());
    for (const auto& b : blessings) {
        if (!(boundKey(b) == pk)) throw Error("presented blessings bound to different keys");
        if (!verifyCerts(b)) throw Error("presented blessing chain does not verify");
    }
    return pk;
}

}  // namespace detail

// What the handshake established about the peer.
struct PeerInfo {
    PublicKey key;                            // the key the peer proved possession of
    std::vector<Blessing> verifiedBlessings;  // chains that verify (validity varies per request)
    std::vector<std::string> presentedNames;  // full names of those chains
    std::vector<std::string> validNames;      // names that validated at handshake time
    DischargeSet discharges;                  // discharges the peer presented
};

using DischargeFetcher =
    std::function<std::optional<Discharge>(const ThirdPartyCaveat& tc, std::string* diag)>;

struct DialOptions {
    int timeoutMillis = kHandshakeTimeoutMillis;
    std::optional<ACL> peerPolicy;  // if set, some validated server name must pass it
    Clock clock = systemClock();
    const CaveatRegistry* registry = &CaveatRegistry::global();
    GroupResolver* resolver = &nullResolver();
    DischargeFetcher fetcher;  // used to satisfy third-party caveats on presented blessings
    int utcOffsetMinutes = 0;
    std::int64_t clockSkewSeconds = 0;
    // Pin the server to this exact key instead of requiring a recognized name.
    // A discharge fetch authenticates this way: whoever minted the caveat
    // already chose the discharger's key, so the connection is trustworthy as
    // soon as the handshake proves possession of it.
    std::optional<PublicKey> expectedServerKey;
};

// Client-side handle on an authenticated channel.
class Channel {
public:
    static Channel dialAuthenticated(const std::string& endpoint, Principal& principal,
                                     const DialOptions& opts = {});

    const std::vector<std::string>& peerNames() const { return peer_.validNames; }
    const PublicKey& peerKey() const { return peer_.key; }
    const PeerInfo& peer() const { return peer_; }

    Reply call(const std::string& method, ByteView args = {}, const std::string& suffix = "") {
        Writer w;
        w.stringField(method);
        w.stringField(suffix);
        w.bytesField(args);
        chan_.send(kMsgCall, w.data());
        Reply rep;
        while (true) {
            Frame f = chan_.receive();
            if (f.type == kMsgGrant) {
                Reader r(f.payload);
                Grant g;
                g.blessing = decodeBlessing(r.bytesField());
                g.peerPatternHint = BlessingPattern::parse(r.stringField());
                r.expectEnd();
                rep.grants.push_back(std::move(g));
                continue;
            }
            if (f.type == kMsgReply) {
                Reader r(f.payload);
                std::uint8_t s = r.u8();
                if (s > 3) throw NetError("bad reply status");
                rep.status = static_cast<Status>(s);
                rep.payload = r.bytesField();
                r.expectEnd();
                return rep;
            }
            throw NetError("unexpected frame type during call");
        }
    }

    // Raw exchange for the non-CALL protocols (discharge, group).
    Frame exchange(std::uint8_t type, ByteView payload) {
        chan_.send(type, payload);
        return chan_.receive();
    }

    SecureChannel& secure() { return chan_; }

    void close() {
        if (open_) {
            chan_.sendClose(CloseCode::Normal);
            chan_.socket().close();
            open_ = false;
        }
    }

    ~Channel() { close(); }
    Channel(Channel&& o) noexcept
        : chan_(std::move(o.chan_)), peer_(std::move(o.peer_)), open_(std::exchange(o.open_, false)) {}
    Channel& operator=(Channel&& o) noexcept {
        if (this != &o) {
            close();
            chan_ = std::move(o.chan_);
            peer_ = std::move(o.peer_);
            open_ = std::exchange(o.open_, false);
        }
        return *this;
    }

private:
    Channel() = default;

    SecureChannel chan_;
    PeerInfo peer_;
    bool open_ = true;
};

inline Channel Channel::dialAuthenticated(const std::string& endpoint, Principal& principal,
                                          const DialOptions& opts) {
    Socket sock = dial(endpoint, opts.timeoutMillis);
    sock.setTimeout(opts.timeoutMillis);

    KeyPair eph = generateKeyPair();
    Bytes clientNonce = randomBytes(16);
    Writer hello;
    hello.bytesField(eph.pub.der);
    hello.bytesField(clientNonce);
    writeFrame(sock, kMsgHello, hello.data());

    Frame sa = readFrame(sock);
    if (sa.type == kMsgClose) {
        CloseCode code = sa.payload.size() == 1 && sa.payload[0] <= 5
                             ? static_cast<CloseCode>(sa.payload[0])
                             : CloseCode::ProtocolError;
        throw ClosedError(code);
    }
    if (sa.type != kMsgServerAuth) throw NetError("expected server auth");
    Reader sar(sa.payload);
    Bytes serverEph = sar.bytesField();
    Bytes serverNonce = sar.bytesField();
    Bytes sealedServer = sar.bytesField();
    sar.expectEnd();
    if (serverNonce.size() != 16) throw NetError("bad server nonce");

    ChannelKeys keys = deriveChannelKeys(eph.sec, PublicKey{serverEph}, clientNonce, serverNonce);
    SealedDirection sendDir(keys.clientToServerKey, keys.clientToServerIv);
    SealedDirection recvDir(keys.serverToClientKey, keys.serverToClientIv);

    auto opened = recvDir.open(kMsgServerAuth, sealedServer);
    if (!opened) throw NetError("server auth failed to open");
    detail::AuthPayload serverAuth = detail::decodeAuthPayload(*opened);
    PublicKey serverKey = detail::checkPresentedBlessings(serverAuth.blessings);

    Digest transcript =
        detail::handshakeTranscript(eph.pub.der, clientNonce, serverEph, serverNonce);
    if (!verify(serverKey, hashArgs(kServerAuthTag, transcript), serverAuth.signature))
        throw Error("server transcript signature does not verify");
    if (opts.expectedServerKey && !(serverKey == *opts.expectedServerKey)) {
        writeClose(sock, CloseCode::Unauthenticated);
        throw Error("server key does not match the pinned key");
    }

    // Validate the server's names against our roots, then against the caller's
    // peer policy. Our own candidate names provide the Peer-caveat context.
    RequestContext con;
    con.timestamp = opts.clock();
    con.method = "Connect";
    con.peerEndpoint = endpoint;
    con.utcOffsetMinutes = opts.utcOffsetMinutes;
    con.clockSkewSeconds = opts.clockSkewSeconds;
    for (const auto& e : principal.store().entries())
        con.localBlessingNames.push_back(fullName(e.blessing));
    for (const auto& [key, d] : serverAuth.discharges) con.discharges.add(d);

    std::vector<std::string> serverNames;
    for (const auto& b : serverAuth.blessings)
        if (validateBlessing(b, principal.roots(), con, *opts.registry))
            serverNames.push_back(fullName(b));
    if (serverNames.empty() && !opts.expectedServerKey) {
        writeClose(sock, CloseCode::Unauthenticated);
        throw Error("no server blessing validates against our roots");
    }
    if (opts.peerPolicy) {
        bool pass = false;
        for (const auto& n : serverNames)
            if (isAuthorized(n, *opts.peerPolicy, *opts.resolver)) {
                pass = true;
                break;
            }
        if (!pass) {
            writeClose(sock, CloseCode::Unauthorized);
            std::string names;
            for (const auto& n : serverNames) names += (names.empty() ? "" : ", ") + n;
            throw Error("server names [" + names + "] do not satisfy the peer policy");
        }
    }

    // Choose what to reveal about ourselves, given who the server turned out
    // to be, and gather discharges for any third-party caveats we carry.
    std::vector<Blessing> present = principal.store().selectForPeer(serverNames);
    if (present.empty()) {
        if (auto def = principal.store().defaultForUnknownPeer()) present.push_back(*def);
    }
    if (present.empty()) {
        writeClose(sock, CloseCode::Normal);
        throw Error("no stored blessing is presentable to this peer");
    }
    if (present.size() > kMaxBlessingsPerHandshake) present.resize(kMaxBlessingsPerHandshake);

    detail::AuthPayload clientAuth;
    clientAuth.blessings = present;
    for (const auto& b : present)
        for (const auto& c : allCaveats(b)) {
            if (!c.isThirdParty()) continue;
            ThirdPartyCaveat tc = decodeThirdPartyCaveat(c);
            if (opts.fetcher) {
                std::string diag;
                if (auto d = opts.fetcher(tc, &diag))
                    clientAuth.discharges.emplace_back(caveatKey(tc), *d);
            }
        }
    clientAuth.signature =
        sign(principal.secretKey(), hashArgs(kClientAuthTag, transcript, sealedServer));
    writeFrame(sock, kMsgClientAuth, sendDir.seal(kMsgClientAuth, detail::encodeAuthPayload(clientAuth)));

    Channel ch;
    ch.chan_ = SecureChannel(std::move(sock), std::move(sendDir), std::move(recvDir));
    ch.peer_.key = serverKey;
    ch.peer_.verifiedBlessings = serverAuth.blessings;
    for (const auto& b : serverAuth.blessings) ch.peer_.presentedNames.push_back(fullName(b));
    ch.peer_.validNames = std::move(serverNames);
    for (const auto& [key, d] : serverAuth.discharges) ch.peer_.discharges.add(d);
    return ch;
}

// ---- Server ----

// The server's identity snapshot: its signing key, the roots it recognizes,
// and the blessings it presents to every client. `recognizeAllRoots` accepts
// any (name, key) root as recognized — the out-of-box mode of a claimable
// device that must authenticate strangers.
struct ServerIdentity {
    KeyPair keys;
    RootSet roots;
    std::vector<Blessing> present;
    bool recognizeAllRoots = false;
};

struct ServerPolicy {
    ACL connectAcl;                       // gate on handshake completion
    std::map<std::string, ACL> methodAcls;  // per-method; absent method = deny
};

struct CallRequest {
    std::string method;
    std::string suffix;
    Bytes args;
    RequestContext con;
    const PeerInfo* peer = nullptr;
    std::vector<std::string> authorizedNames;  // valid names that passed the method ACL
};

using CallHandler = std::function<Reply(CallRequest&)>;

// Handler for a non-CALL frame type (discharge and group protocols). The
// handler owns the reply frames it sends.
using RawHandler = std::function<void(SecureChannel&, CallRequest&)>;

struct ServerConfig {
    Clock clock = systemClock();
    const CaveatRegistry* registry = &CaveatRegistry::global();
    GroupResolver* resolver = &nullResolver();
    std::string auditPath;
    int utcOffsetMinutes = 0;
    std::int64_t clockSkewSeconds = 0;
    int handshakeTimeoutMillis = kHandshakeTimeoutMillis;
    int idleTimeoutMillis = 60000;
    std::string listenHost = "127.0.0.1";
    std::uint16_t listenPort = 0;
};

class Server {
public:
    using Config = ServerConfig;

    Server(ServerIdentity identity, ServerPolicy policy, Config config = {})
        : identity_(std::make_shared<const ServerIdentity>(std::move(identity))),
          policy_(std::make_shared<const ServerPolicy>(std::move(policy))),
          config_(std::move(config)),
          audit_(std::filesystem::path(config_.auditPath)) {}

    ~Server() { stop(); }

    void setMethod(const std::string& name, CallHandler h) { methods_[name] = std::move(h); }

    struct RawEndpoint {
        std::string pseudoMethod;  // name used for the ACL lookup and audit record
        RawHandler handler;
        std::function<void(SecureChannel&)> onDenied;  // protocol-appropriate refusal
    };
    void setRawEndpoint(std::uint8_t frameType, RawEndpoint ep) {
        raw_[frameType] = std::move(ep);
    }

    void updateIdentity(ServerIdentity id) {
        std::lock_guard lock(snapMu_);
        identity_ = std::make_shared<const ServerIdentity>(std::move(id));
    }
    void updatePolicy(ServerPolicy p) {
        std::lock_guard lock(snapMu_);
        policy_ = std::make_shared<const ServerPolicy>(std::move(p));
    }
    std::shared_ptr<const ServerIdentity> identity() const {
        std::lock_guard lock(snapMu_);
        return identity_;
    }
    std::shared_ptr<const ServerPolicy> policy() const {
        std::lock_guard lock(snapMu_);
        return policy_;
    }

    AuditLog& audit() { return audit_; }
    const std::string& endpoint() const { return listener_.endpoint(); }

    std::string start() {
        listener_ = Listener::listen(config_.listenHost, config_.listenPort);
        acceptThread_ = std::thread([this] { acceptLoop(); });
        return listener_.endpoint();
    }

    void stop() {
        bool expected = false;
        if (!stopping_.compare_exchange_strong(expected, true)) return;
        listener_.close();
        if (acceptThread_.joinable()) acceptThread_.join();
        {
            std::lock_guard lock(connMu_);
            for (int fd : liveFds_) ::shutdown(fd, SHUT_RDWR);
        }
        for (auto& t : connThreads_) t.join();
        connThreads_.clear();
    }

private:
    void acceptLoop() {
        while (!stopping_) {
            Socket s;
            try {
                s = listener_.accept();
            } catch (const NetError&) {
                break;  // listener closed
            }
            std::lock_guard lock(connMu_);
            if (stopping_) break;
            connThreads_.emplace_back([this, sock = std::move(s)]() mutable {
                handleConnection(std::move(sock));
            });
        }
    }

    struct FdGuard {
        Server* srv;
        int fd;
        FdGuard(Server* s, int f) : srv(s), fd(f) {
            std::lock_guard lock(srv->connMu_);
            srv->liveFds_.insert(fd);
        }
        ~FdGuard() {
            std::lock_guard lock(srv->connMu_);
            srv->liveFds_.erase(fd);
        }
    };

    void auditRecord(std::int64_t t, const std::string& method,
                     std::vector<std::string> names, Decision d) {
        if (!audit_.enabled()) return;
        try {
            audit_.append(AuditRecord{t, method, std::move(names), d});
        } catch (const Error&) {
            // an unwritable audit log must not take the service down
        }
    }

    // Re-validate the peer's blessings in a fresh context and apply the given
    // ACL. Populates req.con and req.authorizedNames; returns the decision.
    Decision authorize(const PeerInfo& peer, const std::string& aclName, CallRequest& req,
                       const ServerIdentity& id, const ServerPolicy& pol) {
        req.con.timestamp = config_.clock();
        req.con.peerEndpoint = "";
        req.con.utcOffsetMinutes = config_.utcOffsetMinutes;
        req.con.clockSkewSeconds = config_.clockSkewSeconds;
        for (const auto& b : id.present) req.con.localBlessingNames.push_back(fullName(b));
        req.con.discharges = peer.discharges;
        req.peer = &peer;

        bool caveatFail = false;
        std::vector<std::string> valid;
        std::shared_ptr<const Blessing> firstValid;
        for (const auto& b : peer.verifiedBlessings) {
            ValidationResult v = id.recognizeAllRoots
                                     ? validateAssumingRecognized(b, req.con)
                                     : validateBlessing(b, id.roots, req.con, *config_.registry);
            if (v.ok()) {
                valid.push_back(fullName(b));
                if (!firstValid) firstValid = std::make_shared<const Blessing>(b);
            } else if (v.failure == ValidationResult::Failure::CaveatFailed) {
                caveatFail = true;
            }
        }
        if (valid.empty()) return caveatFail ? Decision::DeniedCaveat : Decision::DeniedUnrecognized;
        req.con.remoteBlessing = firstValid;

        auto aclIt = pol.methodAcls.find(aclName);
        if (aclIt == pol.methodAcls.end()) return Decision::DeniedACL;  // default deny
        for (const auto& n : valid)
            if (isAuthorized(n, aclIt->second, *config_.resolver)) req.authorizedNames.push_back(n);
        return req.authorizedNames.empty() ? Decision::DeniedACL : Decision::Allowed;
    }

    ValidationResult validateAssumingRecognized(const Blessing& b, const RequestContext& con) {
        RootSet one;
        one.add(root(b));
        return validateBlessing(b, one, con, *config_.registry);
    }

    // Server side of the handshake. On failure audits a "Connect" record and
    // returns nothing.
    std::optional<std::pair<SecureChannel, PeerInfo>> serverHandshake(Socket sock) {
        sock.setTimeout(config_.handshakeTimeoutMillis);
        auto id = identity();
        auto pol = policy();

        Frame hello = readFrame(sock);
        if (hello.type != kMsgHello) {
            writeClose(sock, CloseCode::ProtocolError);
            return std::nullopt;
        }
        Reader hr(hello.payload);
        Bytes clientEph = hr.bytesField();
        Bytes clientNonce = hr.bytesField();
        hr.expectEnd();
        if (clientNonce.size() != 16) {
            writeClose(sock, CloseCode::ProtocolError);
            return std::nullopt;
        }

        KeyPair eph = generateKeyPair();
        Bytes serverNonce = randomBytes(16);
        ChannelKeys keys =
            deriveChannelKeys(eph.sec, PublicKey{clientEph}, clientNonce, serverNonce);
        SealedDirection sendDir(keys.serverToClientKey, keys.serverToClientIv);
        SealedDirection recvDir(keys.clientToServerKey, keys.clientToServerIv);
        Digest transcript =
            detail::handshakeTranscript(clientEph, clientNonce, eph.pub.der, serverNonce);

        detail::AuthPayload serverAuth;
        serverAuth.blessings = id->present;
        serverAuth.signature = sign(id->keys.sec, hashArgs(kServerAuthTag, transcript));
        Bytes sealedServer = sendDir.seal(kMsgServerAuth, detail::encodeAuthPayload(serverAuth));
        Writer saw;
        saw.bytesField(eph.pub.der);
        saw.bytesField(serverNonce);
        saw.bytesField(sealedServer);
        writeFrame(sock, kMsgServerAuth, saw.data());

        Frame caf = readFrame(sock);
        if (caf.type != kMsgClientAuth) {
            writeClose(sock, CloseCode::ProtocolError);
            return std::nullopt;
        }
        PeerInfo peer;
        try {
            auto opened = recvDir.open(kMsgClientAuth, caf.payload);
            if (!opened) throw Error("client auth failed to open");
            detail::AuthPayload clientAuth = detail::decodeAuthPayload(*opened);
            peer.key = detail::checkPresentedBlessings(clientAuth.blessings);
            if (!verify(peer.key, hashArgs(kClientAuthTag, transcript, sealedServer),
                        clientAuth.signature))
                throw Error("client transcript signature does not verify");
            peer.verifiedBlessings = clientAuth.blessings;
            for (const auto& b : clientAuth.blessings) peer.presentedNames.push_back(fullName(b));
            for (const auto& [key, d] : clientAuth.discharges) {
                (void)key;
                peer.discharges.add(d);
            }
        } catch (const Error&) {
            writeClose(sock, CloseCode::ProtocolError);
            return std::nullopt;
        }

        SecureChannel chan(std::move(sock), std::move(sendDir), std::move(recvDir));
        CallRequest connectReq;
        connectReq.method = "Connect";
        connectReq.con.method = "Connect";
        Decision d = authorizeConnect(peer, connectReq, *id, *pol);
        auditRecord(config_.clock(), "Connect", peer.presentedNames, d);
        if (d != Decision::Allowed) {
            chan.sendClose(d == Decision::DeniedACL ? CloseCode::Unauthorized
                                                    : CloseCode::Unauthenticated);
            return std::nullopt;
        }
        peer.validNames = connectReq.authorizedNames;
        return std::make_pair(std::move(chan), std::move(peer));
    }

    Decision authorizeConnect(const PeerInfo& peer, CallRequest& req, const ServerIdentity& id,
                              const ServerPolicy& pol) {
        ServerPolicy connectPol;
        connectPol.methodAcls["Connect"] = pol.connectAcl;
        return authorize(peer, "Connect", req, id, connectPol);
    }

    void handleConnection(Socket sock) {
        FdGuard guard(this, sock.fd());
        std::optional<std::pair<SecureChannel, PeerInfo>> hs;
        try {
            hs = serverHandshake(std::move(sock));
        } catch (const NetError&) {
            return;  // peer vanished or timed out mid-handshake
        } catch (const Error&) {
            return;
        }
        if (!hs) return;
        SecureChannel& chan = hs->first;
        PeerInfo& peer = hs->second;
        chan.socket().setTimeout(config_.idleTimeoutMillis);

        try {
            while (true) {
                Frame f = chan.receive();
                if (f.type == kMsgCall) {
                    handleCall(chan, peer, f);
                    continue;
                }
                auto rawIt = raw_.find(f.type);
                if (rawIt != raw_.end()) {
                    handleRaw(chan, peer, f, rawIt->second);
                    continue;
                }
                chan.sendClose(CloseCode::ProtocolError);
                return;
            }
        } catch (const ClosedError&) {
            // peer closed; done
        } catch (const NetError&) {
            // connection dropped or timed out
        } catch (const Error&) {
            chan.sendClose(CloseCode::Internal);
        }
    }

    void handleCall(SecureChannel& chan, const PeerInfo& peer, const Frame& f) {
        auto id = identity();
        auto pol = policy();
        CallRequest req;
        Reader r(f.payload);
        req.method = r.stringField();
        req.suffix = r.stringField();
        req.args = r.bytesField();
        r.expectEnd();
        req.con.method = req.method;
        req.con.suffix = req.suffix;

        Decision d = authorize(peer, req.method, req, *id, *pol);
        auditRecord(req.con.timestamp, req.method, peer.presentedNames, d);

        Reply rep;
        if (d != Decision::Allowed) {
            rep = Reply::error(Status::AccessDenied, "access denied");
        } else {
            auto h = methods_.find(req.method);
            if (h == methods_.end()) {
                rep = Reply::error(Status::ProtocolError, "unknown method " + req.method);
            } else {
                try {
                    rep = h->second(req);
                } catch (const std::exception& e) {
                    rep = Reply::error(Status::ApplicationError, e.what());
                }
            }
        }

        for (const auto& g : rep.grants) {
            if (!(boundKey(g.blessing) == peer.key)) {
                rep = Reply::error(Status::ApplicationError,
                                   "grant is not bound to the caller's key");
                rep.grants.clear();
                break;
            }
        }
        for (const auto& g : rep.grants) {
            Writer gw;
            gw.bytesField(encodeBlessing(g.blessing));
            gw.stringField(g.peerPatternHint.text());
            chan.send(kMsgGrant, gw.data());
        }
        Writer rw;
        rw.u8(static_cast<std::uint8_t>(rep.status));
        rw.bytesField(rep.payload);
        chan.send(kMsgReply, rw.data());
    }

    void handleRaw(SecureChannel& chan, const PeerInfo& peer, const Frame& f,
                   const RawEndpoint& ep) {
        auto id = identity();
        auto pol = policy();
        CallRequest req;
        req.method = ep.pseudoMethod;
        req.con.method = ep.pseudoMethod;
        Decision d = authorize(peer, ep.pseudoMethod, req, *id, *pol);
        auditRecord(req.con.timestamp, ep.pseudoMethod, peer.presentedNames, d);
        if (d != Decision::Allowed) {
            if (ep.onDenied) ep.onDenied(chan);
            return;
        }
        req.args = f.payload;
        ep.handler(chan, req);
    }

    mutable std::mutex snapMu_;
    std::shared_ptr<const ServerIdentity> identity_;
    std::shared_ptr<const ServerPolicy> policy_;
    Config config_;
    AuditLog audit_;

    std::map<std::string, CallHandler> methods_;
    std::map<std::uint8_t, RawEndpoint> raw_;

    Listener listener_;
    std::thread acceptThread_;
    std::mutex connMu_;
    std::vector<std::thread> connThreads_;
    std::set<int> liveFds_;
    std::atomic<bool> stopping_{false};
};

// Presentable-to-anyone blessings from a principal's store: the default entry
// (if universal) first, then other universal-pattern entries.
inline std::vector<Blessing> servingBlessings(const Principal& p) {
    std::vector<Blessing> out;
    if (auto def = p.store().defaultForUnknownPeer()) out.push_back(*def);
    for (const auto& e : p.store().entries()) {
        if (!e.peerPattern.isUniversal()) continue;
        bool dup = false;
        for (const auto& b : out) dup = dup || b == e.blessing;
        if (!dup) out.push_back(e.blessing);
    }
    if (out.size() > kMaxBlessingsPerHandshake) out.resize(kMaxBlessingsPerHandshake);
    return out;
}

inline ServerIdentity identityFromPrincipal(const Principal& p, bool recognizeAllRoots = false) {
    ServerIdentity id;
    id.keys = p.keys();
    id.roots = p.roots();
    id.present = servingBlessings(p);
    id.recognizeAllRoots = recognizeAllRoots;
    if (id.present.empty()) throw Error("principal has no universal-pattern blessing to serve with");
    return id;
}

}  // namespace vcred

#endif  // VCRED_CHANNEL_HPP
