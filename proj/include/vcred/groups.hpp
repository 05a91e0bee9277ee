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
// Groups. A group definition is a set of patterns; treating group names as
// non-terminals and name components as terminals, a definition is a grammar
// production, and asking whether some member of a group is a prefix of a
// blessing name is a parsing problem. The resolvers here answer that question
// in remainder form (which prefixes of the queried name are derivable), with
// two deliberate approximations when a definition cannot be reached: Under
// mode pretends the group is empty (used by Allow clauses) and Over mode
// pretends it contains everything (used by Deny clauses). Either way an
// outage only ever makes an authorization decision stricter.

#ifndef VCRED_GROUPS_HPP
#define VCRED_GROUPS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vcred/clock.hpp"
#include "vcred/pattern.hpp"

namespace vcred {

struct GroupDefinition {
    std::string name;
    std::vector<BlessingPattern> patterns;  // may be empty: the empty group

    bool operator==(const GroupDefinition&) const = default;

    static GroupDefinition parse(std::string_view text);
    std::string text() const;
};

// Definition file: first line `group: <name>`, then one pattern per line.
// Definitions are pure productions — no deny clauses, and the matching
// artifacts `eob` and `...` have no meaning inside one.
inline GroupDefinition GroupDefinition::parse(std::string_view text) {
    GroupDefinition def;
    std::istringstream in{std::string(text)};
    bool haveName = false;
    std::size_t lineNo = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineNo;
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t\r");
        std::string_view body = std::string_view(line).substr(b, e - b + 1);
        if (body[0] == '#') continue;
        if (!haveName) {
            if (!body.starts_with("group:"))
                throw ParseError("group file must begin with \"group: <name>\"");
            std::string_view n = body.substr(6);
            std::size_t nb = n.find_first_not_of(" \t");
            if (nb == std::string_view::npos) throw ParseError("missing group name");
            std::string name(n.substr(nb));
            if (!isValidNameComponent(name)) throw ParseError("invalid group name \"" + name + "\"");
            def.name = std::move(name);
            haveName = true;
            continue;
        }
        BlessingPattern p = BlessingPattern::parse(body);
        if (p.endsWithEob() || p.isUniversal())
            throw ParseError("group definition line " + std::to_string(lineNo) +
                             ": reserved tokens are not allowed in definitions");
        def.patterns.push_back(std::move(p));
    }
    if (!haveName) throw ParseError("group file must begin with \"group: <name>\"");
    return def;
}

inline std::string GroupDefinition::text() const {
    std::string out = "group: " + name + "\n";
    for (const auto& p : patterns) out += p.text() + "\n";
    return out;
}

// Remainders contributed by hitting a group already being expanded on this
// derivation path. Cutting cycles this way keeps the under/over sandwich:
// assuming "no further members" under-approximates any fixed point, assuming
// "everything" over-approximates it.
inline RemainderSet cycleRemainders(std::size_t nameLen, Mode mode) {
    RemainderSet r;
    if (mode == Mode::Over)
        for (std::size_t k = 1; k <= nameLen; ++k) r.consumed.insert(k);
    return r;
}

// Expand one definition against a name: the union of its patterns' matches,
// with this group added to the visited set for the recursive calls.
inline RemainderSet expandDefinition(const GroupDefinition& def,
                                     std::span<const std::string> name, Mode mode,
                                     const std::set<std::string>& visited,
                                     GroupResolver& resolver) {
    std::set<std::string> nested = visited;
    nested.insert(def.name);
    RemainderSet out;
    for (const auto& p : def.patterns)
        out.merge(matchComponents(p.components, name, mode, resolver, nested));
    return out;
}

// Resolver over a set of definitions held in memory. Groups not defined here
// are delegated to `fallback` (a network resolver, say); with no fallback
// they count as unreachable. An optional reachability predicate lets tests
// simulate partitions: an "unreachable" group approximates even though its
// definition is at hand.
class LocalResolver : public GroupResolver {
public:
    using Reachable = std::function<bool(const std::string&)>;

    explicit LocalResolver(std::vector<GroupDefinition> defs, GroupResolver* fallback = nullptr)
        : fallback_(fallback) {
        for (auto& d : defs) defs_.emplace(d.name, std::move(d));
    }

    void setReachable(Reachable r) { reachable_ = std::move(r); }

    bool defines(const std::string& g) const { return defs_.count(g) != 0; }

    RemainderSet remainders(const std::string& group, std::span<const std::string> name,
                            Mode mode, const std::set<std::string>& visited) override {
        if (visited.count(group)) return cycleRemainders(name.size(), mode);
        auto it = defs_.find(group);
        if (it == defs_.end()) {
            if (fallback_) return fallback_->remainders(group, name, mode, visited);
            return approximateAll(name.size(), mode);
        }
        if (reachable_ && !reachable_(group)) return approximateAll(name.size(), mode);
        return expandDefinition(it->second, name, mode, visited, *this);
    }

private:
    std::map<std::string, GroupDefinition> defs_;
    GroupResolver* fallback_;
    Reachable reachable_;
};

inline bool membershipPrefix(const std::string& group, std::span<const std::string> name,
                             Mode mode, GroupResolver& resolver) {
    return resolver.remainders(group, name, mode, {}).any();
}

inline bool membershipPrefix(const std::string& group, std::string_view bn, Mode mode,
                             GroupResolver& resolver) {
    auto name = splitBlessingName(bn);
    return membershipPrefix(group, name, mode, resolver);
}

// Memoizing wrapper for unreliable connectivity. Exact results are cached for
// `ttl`; when a query comes back approximated (server unreachable) a cached
// result younger than `staleBound` is served instead, marked approximated
// because the definition may have changed since. Only top-level queries
// (empty visited set) are cached — recursive ones are keyed by derivation
// path and don't repeat enough to matter.
class CachingResolver : public GroupResolver {
public:
    CachingResolver(GroupResolver& inner, Clock clock, std::int64_t ttlSeconds,
                    std::int64_t staleBoundSeconds = 24 * 3600)
        : inner_(inner), clock_(std::move(clock)), ttl_(ttlSeconds), staleBound_(staleBoundSeconds) {}

    RemainderSet remainders(const std::string& group, std::span<const std::string> name,
                            Mode mode, const std::set<std::string>& visited) override {
        if (!visited.empty()) return inner_.remainders(group, name, mode, visited);
        std::string key = group + "\x1f" + joinName(name) + "\x1f" +
                          (mode == Mode::Under ? "u" : "o");
        std::int64_t now = clock_();
        {
            std::lock_guard lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end() && now - it->second.at <= ttl_) return it->second.result;
        }
        RemainderSet fresh = inner_.remainders(group, name, mode, visited);
        std::lock_guard lock(mu_);
        if (!fresh.approximated) {
            cache_[key] = Entry{fresh, now};
            return fresh;
        }
        auto it = cache_.find(key);
        if (it != cache_.end() && now - it->second.at <= staleBound_) {
            RemainderSet stale = it->second.result;
            stale.approximated = true;
            return stale;
        }
        return fresh;
    }

private:
    struct Entry {
        RemainderSet result;
        std::int64_t at = 0;
    };

    GroupResolver& inner_;
    Clock clock_;
    std::int64_t ttl_;
    std::int64_t staleBound_;
    std::mutex mu_;
    std::map<std::string, Entry> cache_;
};

// Registry file mapping group names to the endpoints serving them:
// one `<group> <host>:<port>` per line.
inline std::map<std::string, std::string> parseGroupRegistry(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::size_t lineNo = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineNo;
        std::istringstream ls(line);
        std::string g, ep, extra;
        if (!(ls >> g)) continue;
        if (g[0] == '#') continue;
        if (!(ls >> ep) || (ls >> extra))
            throw ParseError("registry line " + std::to_string(lineNo) +
                             ": expected \"<group> <host>:<port>\"");
        out[g] = ep;
    }
    return out;
}

inline std::string groupRegistryText(const std::map<std::string, std::string>& reg) {
    std::string out;
    for (const auto& [g, ep] : reg) out += g + " " + ep + "\n";
    return out;
}

}  // namespace vcred

#endif  // VCRED_GROUPS_HPP
