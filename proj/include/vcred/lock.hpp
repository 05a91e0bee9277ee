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
// A claimable physical lock that is its own identity provider.
//
// Out of the box the lock authenticates as the blessing its manufacturer
// installed ("PopularCorp/Lock9") and accepts a connection from anyone — it
// cannot yet know whom to trust, so it recognizes every root and exposes only
// Claim and Status. The first successful Claim names the lock: it mints a
// self-blessing for the requested name, grants an extension of it ("<name>/Key")
// to the claimer's key, and from then on serves as <name> with every
// interesting method gated by ACLs rooted in that name. Claim is permanently
// disabled afterwards; a factory reset (performed on the directory while the
// service is down — the physical analogue is holding the reset button) wipes
// the claim and restores the manufacturer state.

#ifndef VCRED_LOCK_HPP
#define VCRED_LOCK_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vcred/channel.hpp"
#include "vcred/principal.hpp"

namespace vcred {

inline constexpr std::uint8_t kLockStateFileVersion = 0x01;

struct LockStatus {
    bool claimed = false;
    std::string name;  // empty while unclaimed
    bool locked = true;
};

inline Bytes encodeLockStatus(const LockStatus& s) {
    Writer w;
    w.u8(s.claimed ? 1 : 0);
    w.stringField(s.name);
    w.u8(s.locked ? 1 : 0);
    return w.take();
}

inline LockStatus decodeLockStatus(ByteView payload) {
    Reader r(payload);
    LockStatus s;
    std::uint8_t c = r.u8();
    s.name = r.stringField();
    std::uint8_t l = r.u8();
    r.expectEnd();
    if (c > 1 || l > 1) throw EncodingError("bad lock status");
    s.claimed = c == 1;
    s.locked = l == 1;
    return s;
}

struct LockOptions {
    Clock clock = systemClock();
    int utcOffsetMinutes = 0;
    std::function<void(bool locked)> actuator;  // physical hook; failures are contained
    std::string listenHost = "127.0.0.1";
    std::uint16_t listenPort = 0;
    int idleTimeoutMillis = 60000;
};

class LockService {
public:
    // First-boot provisioning, run by the manufacturer: creates the lock's
    // principal, blesses its key as <manufacturer>/<serial>, and snapshots the
    // factory state for later resets. Returns the installed blessing.
    static Blessing provision(const std::filesystem::path& dir, Principal& manufacturer,
                              const std::string& serial) {
        Principal lock = Principal::create(dir);
        auto mfg = manufacturer.store().defaultBlessing();
        if (!mfg) throw Error("manufacturer principal has no default blessing to extend");
        Blessing installed =
            bless(lock.publicKey(), manufacturer.secretKey(), *mfg, serial, {});
        std::size_t idx = lock.store().add(installed, BlessingPattern::universal(), "manufacturer");
        lock.store().setDefault(idx);
        lock.roots().add(root(installed));
        lock.save();
        std::filesystem::copy_file(dir / "blessings", dir / "blessings.factory");
        std::filesystem::copy_file(dir / "roots", dir / "roots.factory");
        return installed;
    }

    // Restores the factory snapshot and forgets the claim, the physical
    // state, and the audit log. The serving process must not be running.
    static void factoryReset(const std::filesystem::path& dir) {
        if (!std::filesystem::exists(dir / "blessings.factory"))
            throw IoError("no factory snapshot at " + dir.string());
        DirLock lock(dir);
        writeFileAtomic(dir / "blessings", readFileBytes(dir / "blessings.factory"), 0600);
        writeFileAtomic(dir / "roots", readFileBytes(dir / "roots.factory"), 0600);
        std::filesystem::remove(dir / "state");
        std::filesystem::remove(dir / "audit");
    }

    explicit LockService(std::filesystem::path dir, LockOptions opts = {})
        : dir_(std::move(dir)), opts_(std::move(opts)), principal_(Principal::load(dir_)) {
        loadState();
        Server::Config cfg;
        cfg.clock = opts_.clock;
        cfg.utcOffsetMinutes = opts_.utcOffsetMinutes;
        cfg.auditPath = (dir_ / "audit").string();
        cfg.listenHost = opts_.listenHost;
        cfg.listenPort = opts_.listenPort;
        cfg.idleTimeoutMillis = opts_.idleTimeoutMillis;
        srv_ = std::make_unique<Server>(makeIdentity(), makePolicy(), std::move(cfg));
        registerHandlers();
    }

    std::string start() { return srv_->start(); }
    void stop() { srv_->stop(); }
    Server& server() { return *srv_; }
    const Principal& principal() const { return principal_; }

    LockStatus status() const {
        std::lock_guard lock(mu_);
        return LockStatus{claimed_, lockName_, locked_};
    }

private:
    static ACL allowAll() {
        ACL acl;
        acl.allow.push_back(BlessingPattern::universal());
        return acl;
    }

    static ACL allowOnly(const BlessingPattern& p) {
        ACL acl;
        acl.allow.push_back(p);
        return acl;
    }

    // The ACLs installed by a claim: every method opens to blessings rooted in
    // the lock's new name, and AddAcl only to the exact key blessing the
    // claimer received — delegates cannot widen access.
    static std::map<std::string, ACL> claimedAcls(const std::string& lockName) {
        std::map<std::string, ACL> acls;
        BlessingPattern owner = BlessingPattern::parse(lockName);
        for (const char* m : {"Lock", "Unlock", "Status", "AuditLog"})
            acls[m] = allowOnly(owner);
        acls["AddAcl"] = allowOnly(BlessingPattern::parse(lockName + "/Key/" + std::string(kEob)));
        return acls;
    }

    ServerIdentity makeIdentity() const {
        ServerIdentity id;
        id.keys = principal_.keys();
        id.roots = principal_.roots();
        auto def = principal_.store().defaultBlessing();
        if (!def) throw Error("lock principal has no serving blessing");
        id.present = {*def};
        id.recognizeAllRoots = !claimed_;
        return id;
    }

    ServerPolicy makePolicy() const {
        ServerPolicy pol;
        pol.connectAcl = allowAll();
        // Claim stays ACL-open so a post-claim attempt reaches the handler and
        // learns CLAIM_DISABLED instead of a bare access denial.
        pol.methodAcls["Claim"] = allowAll();
        if (claimed_)
            for (const auto& [m, acl] : acls_) pol.methodAcls[m] = acl;
        else
            pol.methodAcls["Status"] = allowAll();
        return pol;
    }

    void registerHandlers() {
        srv_->setMethod("Claim", [this](CallRequest& req) { return handleClaim(req); });
        srv_->setMethod("Lock", [this](CallRequest& req) { return handleSet(req, true); });
        srv_->setMethod("Unlock", [this](CallRequest& req) { return handleSet(req, false); });
        srv_->setMethod("Status", [this](CallRequest&) {
            return Reply::ok(encodeLockStatus(status()));
        });
        srv_->setMethod("AuditLog", [this](CallRequest& req) { return handleAudit(req); });
        srv_->setMethod("AddAcl", [this](CallRequest& req) { return handleAddAcl(req); });
    }

    Reply handleClaim(CallRequest& req) {
        Reader r(req.args);
        std::string requestedName = r.stringField();
        r.expectEnd();

        std::lock_guard lock(mu_);
        if (claimed_) throw Error("CLAIM_DISABLED");
        if (!isValidNameComponent(requestedName))
            throw Error("invalid lock name \"" + requestedName + "\"");

        Blessing self = principal_.blessSelf(requestedName);
        Blessing granted = bless(req.peer->key, principal_.secretKey(), self, "Key", {});

        std::size_t idx = principal_.store().add(self, BlessingPattern::universal(), "serving");
        principal_.store().setDefault(idx);
        principal_.roots().add(root(self));
        principal_.save();

        claimed_ = true;
        lockName_ = requestedName;
        acls_ = claimedAcls(lockName_);
        persistState();
        srv_->updateIdentity(makeIdentity());
        srv_->updatePolicy(makePolicy());

        Reply rep = Reply::okText(requestedName);
        rep.grants.push_back(Grant{granted, BlessingPattern::parse(requestedName)});
        return rep;
    }

    Reply handleSet(CallRequest&, bool toLocked) {
        std::lock_guard lock(mu_);
        if (!claimed_) throw Error("lock is unclaimed");
        locked_ = toLocked;
        persistState();
        if (opts_.actuator) {
            try {
                opts_.actuator(locked_);
            } catch (...) {
                // the recorded state is authoritative; a flaky actuator must
                // not wedge the service
            }
        }
        return Reply::okText(locked_ ? "locked" : "unlocked");
    }

    Reply handleAudit(CallRequest& req) {
        Reader r(req.args);
        std::int64_t since = r.i64();
        r.expectEnd();
        std::vector<AuditRecord> records = srv_->audit().readSince(since);
        Writer w;
        w.count(records.size());
        for (const auto& rec : records) w.bytesField(canonicalEncode(rec));
        return Reply::ok(w.data());
    }

    Reply handleAddAcl(CallRequest& req) {
        Reader r(req.args);
        std::string method = r.stringField();
        std::string patternText = r.stringField();
        std::uint8_t hasRoot = r.u8();
        std::string rootName;
        Bytes rootKey;
        if (hasRoot == 1) {
            rootName = r.stringField();
            rootKey = r.bytesField();
        } else if (hasRoot != 0) {
            throw Error("bad root flag");
        }
        r.expectEnd();

        std::lock_guard lock(mu_);
        if (!claimed_) throw Error("lock is unclaimed");
        auto it = acls_.find(method);
        if (it == acls_.end() || method == "AddAcl")
            throw Error("method \"" + method + "\" does not accept ACL additions");
        it->second.allow.push_back(BlessingPattern::parse(patternText));
        if (hasRoot == 1) {
            principal_.roots().add(Root{rootName, PublicKey{rootKey}});
            principal_.save();
            srv_->updateIdentity(makeIdentity());
        }
        persistState();
        srv_->updatePolicy(makePolicy());
        return Reply::okText("acl updated");
    }

    void loadState() {
        std::filesystem::path p = dir_ / "state";
        if (!std::filesystem::exists(p)) return;  // factory-fresh
        Reader r0(readFileBytes(p));
        if (r0.u8() != kLockStateFileVersion) throw EncodingError("unknown lock state version");
        std::uint8_t c = r0.u8();
        lockName_ = r0.stringField();
        std::uint8_t l = r0.u8();
        if (c > 1 || l > 1) throw EncodingError("corrupt lock state");
        claimed_ = c == 1;
        locked_ = l == 1;
        std::uint32_t n = r0.count();
        for (std::uint32_t i = 0; i < n; ++i) {
            std::string method = r0.stringField();
            acls_[method] = ACL::parse(r0.stringField());
        }
        r0.expectEnd();
        if (claimed_ == lockName_.empty()) throw EncodingError("corrupt lock state");
    }

    void persistState() const {
        Writer w;
        w.u8(kLockStateFileVersion);
        w.u8(claimed_ ? 1 : 0);
        w.stringField(lockName_);
        w.u8(locked_ ? 1 : 0);
        w.count(acls_.size());
        for (const auto& [method, acl] : acls_) {
            w.stringField(method);
            w.stringField(acl.text());
        }
        writeFileAtomic(dir_ / "state", w.data(), 0600);
    }

    std::filesystem::path dir_;
    LockOptions opts_;
    Principal principal_;
    std::unique_ptr<Server> srv_;

    mutable std::mutex mu_;
    bool claimed_ = false;
    std::string lockName_;
    bool locked_ = true;
    std::map<std::string, ACL> acls_;
};

// Argument codecs for the CLI and tests.

inline Bytes encodeClaimArgs(const std::string& requestedName) {
    Writer w;
    w.stringField(requestedName);
    return w.take();
}

inline Bytes encodeAuditArgs(std::int64_t since) {
    Writer w;
    w.i64(since);
    return w.take();
}

inline std::vector<AuditRecord> decodeAuditReply(ByteView payload) {
    Reader r(payload);
    std::uint32_t n = r.count();
    std::vector<AuditRecord> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(decodeAuditRecord(r.bytesField()));
    r.expectEnd();
    return out;
}

inline Bytes encodeAddAclArgs(const std::string& method, const BlessingPattern& pattern,
                              const std::optional<Root>& newRoot = std::nullopt) {
    Writer w;
    w.stringField(method);
    w.stringField(pattern.text());
    w.u8(newRoot ? 1 : 0);
    if (newRoot) {
        w.stringField(newRoot->name);
        w.bytesField(newRoot->key.der);
    }
    return w.take();
}

}  // namespace vcred

#endif  // VCRED_LOCK_HPP
