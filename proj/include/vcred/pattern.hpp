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
// Blessing names, blessing patterns, and ACLs.
//
// A blessing name is a "/"-joined sequence of name components. A pattern is a
// "/"-joined sequence of components where each component is either a literal
// name or a group reference (written with a trailing `_G` marker in text
// form). A pattern denotes a set of blessing names; a name bn matches a
// pattern when some denoted name is a component-sequence prefix of bn. The
// reserved final component `eob` ("end of blessing") disables that prefix
// extension and demands an exact match instead.
//
// Group references are resolved through a GroupResolver. Resolution is
// approximate by design: when a group's definition cannot be reached, Allow
// clauses under-approximate it (match less) and Deny clauses over-approximate
// it (deny more), so connectivity failures can only make decisions stricter.

#ifndef VCRED_PATTERN_HPP
#define VCRED_PATTERN_HPP

#include <cstdint>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vcred/encoding.hpp"

namespace vcred {

class ParseError : public Error {
public:
    using Error::Error;
};

// Reserved tokens. `eob` terminates a pattern; `...` is the universal pattern
// used by blessing stores and service configuration. Neither may appear as a
// component of a real blessing name.
inline constexpr std::string_view kEob = "eob";
inline constexpr std::string_view kUniversal = "...";

using NameComponents = std::vector<std::string>;

inline bool isValidNameComponent(std::string_view c) {
    return !c.empty() && c.find('/') == std::string_view::npos && c != kEob && c != kUniversal;
}

inline NameComponents splitBlessingName(std::string_view bn) {
    NameComponents out;
    std::size_t start = 0;
    while (true) {
        std::size_t slash = bn.find('/', start);
        std::string_view comp = bn.substr(start, slash == std::string_view::npos ? slash : slash - start);
        if (!isValidNameComponent(comp))
            throw ParseError("invalid blessing name component in \"" + std::string(bn) + "\"");
        out.emplace_back(comp);
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    return out;
}

inline std::string joinName(std::span<const std::string> components) {
    std::string out;
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i) out += '/';
        out += components[i];
    }
    return out;
}

// Component-sequence prefix relation, never substring-of-text: "Ali" is not a
// prefix of "Alice/TV" but "Alice" is.
inline bool isPrefix(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() > b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

inline bool isPrefix(std::string_view bn1, std::string_view bn2) {
    auto a = splitBlessingName(bn1), b = splitBlessingName(bn2);
    return isPrefix(a, b);
}

struct PatternComponent {
    enum class Kind : std::uint8_t { Name, Group };
    Kind kind = Kind::Name;
    std::string text;  // group components hold the group name without the _G marker

    bool operator==(const PatternComponent&) const = default;
};

struct BlessingPattern {
    std::vector<PatternComponent> components;

    bool operator==(const BlessingPattern&) const = default;

    // The universal pattern, matched by every blessing name.
    bool isUniversal() const {
        return components.size() == 1 && components[0].kind == PatternComponent::Kind::Name &&
               components[0].text == kUniversal;
    }

    bool isGroupFree() const {
        for (const auto& c : components)
            if (c.kind == PatternComponent::Kind::Group) return false;
        return true;
    }

    bool endsWithEob() const {
        return !components.empty() && components.back().kind == PatternComponent::Kind::Name &&
               components.back().text == kEob;
    }

    static BlessingPattern universal() {
        return BlessingPattern{{PatternComponent{PatternComponent::Kind::Name, std::string(kUniversal)}}};
    }

    static BlessingPattern parse(std::string_view text);
    std::string text() const;
};

// Text syntax: components are "/"-separated; a trailing "_G" marks a group
// reference ("AliceFriends_G/Phone"). One cost of the marker: a literal name
// component ending in "_G" cannot be written in pattern text.
inline BlessingPattern BlessingPattern::parse(std::string_view text) {
    if (text.empty()) throw ParseError("empty pattern");
    if (text == kUniversal) return universal();
    BlessingPattern p;
    std::size_t start = 0;
    while (true) {
        std::size_t slash = text.find('/', start);
        std::string_view comp = text.substr(start, slash == std::string_view::npos ? slash : slash - start);
        bool last = slash == std::string_view::npos;
        if (comp.empty()) throw ParseError("empty component in pattern \"" + std::string(text) + "\"");
        if (comp == kUniversal)
            throw ParseError("\"...\" is only valid as a whole pattern");
        if (comp.size() > 2 && comp.substr(comp.size() - 2) == "_G") {
            std::string_view g = comp.substr(0, comp.size() - 2);
            if (!isValidNameComponent(g))
                throw ParseError("invalid group name in pattern \"" + std::string(text) + "\"");
            p.components.push_back({PatternComponent::Kind::Group, std::string(g)});
        } else if (comp == kEob) {
            if (!last) throw ParseError("\"eob\" may only end a pattern");
            if (p.components.empty()) throw ParseError("\"eob\" cannot stand alone");
            p.components.push_back({PatternComponent::Kind::Name, std::string(kEob)});
        } else {
            if (!isValidNameComponent(comp))
                throw ParseError("invalid component in pattern \"" + std::string(text) + "\"");
            p.components.push_back({PatternComponent::Kind::Name, std::string(comp)});
        }
        if (last) break;
        start = slash + 1;
    }
    return p;
}

inline std::string BlessingPattern::text() const {
    std::string out;
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i) out += '/';
        out += components[i].text;
        if (components[i].kind == PatternComponent::Kind::Group) out += "_G";
    }
    return out;
}

inline void encodeValue(Writer& w, const BlessingPattern& p) { w.stringField(p.text()); }

// Group resolution mode. Allow clauses resolve groups in Under mode and Deny
// clauses in Over mode, keeping decisions safe when group servers are down.
enum class Mode : std::uint8_t { Under = 0, Over = 1 };

// Result of deriving prefixes of a name from a group (or pattern): `consumed`
// holds the lengths, in components, of every derivable prefix. Consuming the
// whole name corresponds to its full length being present. `approximated` is
// sticky and records that an unreachable or stale group definition forced an
// under/over approximation somewhere in the derivation.
struct RemainderSet {
    std::set<std::size_t> consumed;
    bool approximated = false;

    bool any() const { return !consumed.empty(); }
    bool whole(std::size_t nameLen) const { return consumed.count(nameLen) != 0; }
    void merge(const RemainderSet& o) {
        consumed.insert(o.consumed.begin(), o.consumed.end());
        approximated = approximated || o.approximated;
    }
};

inline RemainderSet approximateAll(std::size_t nameLen, Mode mode) {
    RemainderSet r;
    r.approximated = true;
    if (mode == Mode::Over)
        for (std::size_t k = 1; k <= nameLen; ++k) r.consumed.insert(k);
    return r;
}

// Resolves a group name to the set of prefixes of `name` derivable from its
// definition. `visited` carries the group names already being expanded on
// this derivation path so that definition cycles terminate. Implementations
// must never throw for unreachable or unknown groups; they return the
// mode-appropriate approximation instead.
class GroupResolver {
public:
    virtual ~GroupResolver() = default;
    virtual RemainderSet remainders(const std::string& group, std::span<const std::string> name,
                                    Mode mode, const std::set<std::string>& visited) = 0;
};

// Resolver for contexts with no group infrastructure: every group is treated
// as unreachable, yielding the pure approximation.
class NullResolver : public GroupResolver {
public:
    RemainderSet remainders(const std::string&, std::span<const std::string> name, Mode mode,
                            const std::set<std::string>&) override {
        return approximateAll(name.size(), mode);
    }
};

inline GroupResolver& nullResolver() {
    static NullResolver r;
    return r;
}

// Core matcher: which prefixes of `name` are derivable from the component
// sequence `pattern`? Works left to right over a frontier of consumed-length
// positions; literal components consume exactly one matching component, group
// components consume whatever the resolver derives. The reserved tokens are
// not handled here (they never match, since names cannot contain them);
// matchPattern strips them first.
inline RemainderSet matchComponents(std::span<const PatternComponent> pattern,
                                    std::span<const std::string> name, Mode mode,
                                    GroupResolver& resolver,
                                    const std::set<std::string>& visited = {}) {
    RemainderSet result;
    std::set<std::size_t> frontier{0};
    for (const auto& comp : pattern) {
        std::set<std::size_t> next;
        for (std::size_t pos : frontier) {
            if (pos >= name.size()) continue;  // nothing left to consume
            if (comp.kind == PatternComponent::Kind::Name) {
                if (name[pos] == comp.text) next.insert(pos + 1);
            } else {
                RemainderSet sub =
                    resolver.remainders(comp.text, name.subspan(pos), mode, visited);
                result.approximated = result.approximated || sub.approximated;
                for (std::size_t k : sub.consumed)
                    if (k >= 1 && pos + k <= name.size()) next.insert(pos + k);
            }
        }
        frontier = std::move(next);
        if (frontier.empty()) break;
    }
    frontier.erase(0);
    result.consumed = std::move(frontier);
    return result;
}

inline bool matchPattern(const BlessingPattern& p, std::span<const std::string> name,
                         GroupResolver& resolver, Mode mode) {
    if (p.components.empty() || name.empty()) return false;
    if (p.isUniversal()) return true;
    std::span<const PatternComponent> comps(p.components);
    bool exact = p.endsWithEob();
    if (exact) comps = comps.subspan(0, comps.size() - 1);
    RemainderSet r = matchComponents(comps, name, mode, resolver);
    return exact ? r.whole(name.size()) : r.any();
}

inline bool matchPattern(const BlessingPattern& p, std::string_view bn, GroupResolver& resolver,
                         Mode mode) {
    auto name = splitBlessingName(bn);
    return matchPattern(p, name, resolver, mode);
}

struct ACL {
    std::vector<BlessingPattern> allow;
    std::vector<BlessingPattern> deny;

    bool operator==(const ACL&) const = default;

    static ACL parse(std::string_view text, std::vector<std::string>* warnings = nullptr);
    std::string text() const;
};

// ACL file format: one pattern per line, each line prefixed `allow:` or
// `deny:`. Blank lines and `#` comments are skipped. An `eob` terminator in a
// deny pattern draws a lint warning — extensions of a denied name are denied
// regardless, so the exactness it asks for cannot be honored.
inline ACL ACL::parse(std::string_view text, std::vector<std::string>* warnings) {
    ACL acl;
    std::size_t lineNo = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        ++lineNo;
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t\r");
        std::string_view body = std::string_view(line).substr(b, e - b + 1);
        if (body.empty() || body[0] == '#') continue;
        bool isAllow = body.starts_with("allow:");
        bool isDeny = body.starts_with("deny:");
        if (!isAllow && !isDeny)
            throw ParseError("ACL line " + std::to_string(lineNo) +
                             ": expected \"allow:\" or \"deny:\"");
        std::string_view rest = body.substr(isAllow ? 6 : 5);
        std::size_t rb = rest.find_first_not_of(" \t");
        if (rb == std::string_view::npos)
            throw ParseError("ACL line " + std::to_string(lineNo) + ": missing pattern");
        BlessingPattern p = BlessingPattern::parse(rest.substr(rb));
        if (isDeny && p.endsWithEob() && warnings)
            warnings->push_back("deny pattern \"" + p.text() +
                                "\" ends in eob; denial extends to all extensions regardless");
        (isAllow ? acl.allow : acl.deny).push_back(std::move(p));
    }
    return acl;
}

inline std::string ACL::text() const {
    std::string out;
    for (const auto& p : allow) out += "allow: " + p.text() + "\n";
    for (const auto& p : deny) out += "deny: " + p.text() + "\n";
    return out;
}

// Authorization decision for a blessing name against an ACL: some allow
// pattern must match, and no deny pattern may match the name or any prefix of
// it. Matching a prefix in the deny direction is what makes denial closed
// under extension — if bn is denied, so is bn/x. The default is deny: an
// empty allow list admits nobody.
inline bool isAuthorized(std::span<const std::string> name, const ACL& acl,
                         GroupResolver& resolver) {
    if (name.empty()) return false;
    bool allowed = false;
    for (const auto& p : acl.allow)
        if (matchPattern(p, name, resolver, Mode::Under)) {
            allowed = true;
            break;
        }
    if (!allowed) return false;
    for (const auto& p : acl.deny)
        for (std::size_t len = 1; len <= name.size(); ++len)
            if (matchPattern(p, name.subspan(0, len), resolver, Mode::Over)) return false;
    return true;
}

inline bool isAuthorized(std::string_view bn, const ACL& acl, GroupResolver& resolver) {
    auto name = splitBlessingName(bn);
    return isAuthorized(name, acl, resolver);
}

}  // namespace vcred

#endif  // VCRED_PATTERN_HPP
