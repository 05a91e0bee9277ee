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

#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "helpers.hpp"

using namespace vcred;

namespace {

bool matches(const std::string& pattern, const std::string& name, Mode mode = Mode::Under) {
    return matchPattern(BlessingPattern::parse(pattern), name, nullResolver(), mode);
}

bool authorized(const std::string& name, const std::string& aclText) {
    return isAuthorized(name, ACL::parse(aclText), nullResolver());
}

// Independent matcher for group-free patterns, written straight off the set
// semantics: the meaning of such a pattern is the single name made of its
// components, a trailing terminator demands the whole name, and a name
// matches when some member of the meaning is a component-prefix of it.
struct OraclePattern {
    std::vector<std::string> comps;  // without the terminator
    bool exact = false;

    std::string text() const {
        std::string out;
        for (const auto& c : comps) out += (out.empty() ? "" : "/") + c;
        if (exact) out += (out.empty() ? "eob" : "/eob");
        return out;
    }
};

bool oracleMatch(const OraclePattern& p, const std::vector<std::string>& name) {
    if (p.exact && p.comps.size() != name.size()) return false;
    if (p.comps.size() > name.size()) return false;
    for (std::size_t i = 0; i < p.comps.size(); ++i)
        if (p.comps[i] != name[i]) return false;
    return !name.empty();
}

// All component sequences of length 1..maxLen over the alphabet.
std::vector<std::vector<std::string>> allSequences(const std::vector<std::string>& alphabet,
                                                   std::size_t maxLen, std::size_t minLen = 1) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::vector<std::string>> frontier{{}};
    for (std::size_t len = 1; len <= maxLen; ++len) {
        std::vector<std::vector<std::string>> next;
        for (const auto& seq : frontier)
            for (const auto& sym : alphabet) {
                auto extended = seq;
                extended.push_back(sym);
                next.push_back(extended);
            }
        frontier = next;
        if (len >= minLen) out.insert(out.end(), next.begin(), next.end());
    }
    return out;
}

std::string joined(const std::vector<std::string>& comps) {
    std::string out;
    for (const auto& c : comps) out += (out.empty() ? "" : "/") + c;
    return out;
}

}  // namespace

TEST_CASE("component prefix relation, not substring prefix") {
    CHECK(matches("Alice", "Alice/TV"));
    CHECK_FALSE(matches("Ali", "Alice/TV"));
    CHECK(matches("Alice", "Alice"));
    CHECK(matches("Alice/TV", "Alice/TV/App"));
    CHECK_FALSE(matches("Alice/TV", "Alice"));
}

TEST_CASE("terminator forces exact-name matching") {
    CHECK(matches("Alice/eob", "Alice"));
    CHECK_FALSE(matches("Alice/eob", "Alice/TV"));
    CHECK_THROWS_AS(BlessingPattern::parse("eob"), ParseError);  // nothing to terminate
}

TEST_CASE("the universal pattern matches every name") {
    CHECK(matches("...", "Alice"));
    CHECK(matches("...", "SomeCorp/VideoService/Session9"));
}

TEST_CASE("pattern text round-trips and rejects malformed input") {
    for (const char* t : {"Alice", "Alice/TV", "Alice/eob", "AliceFriends_G/Phone", "..."}) {
        CHECK(BlessingPattern::parse(t).text() == t);
    }
    CHECK_THROWS_AS(BlessingPattern::parse(""), ParseError);
    CHECK_THROWS_AS(BlessingPattern::parse("/Alice"), ParseError);
    CHECK_THROWS_AS(BlessingPattern::parse("Alice/"), ParseError);
    CHECK_THROWS_AS(BlessingPattern::parse("Alice//TV"), ParseError);
    CHECK_THROWS_AS(BlessingPattern::parse("eob/Alice"), ParseError);  // terminator mid-pattern
}

TEST_CASE("acl allow and deny clauses compose") {
    // A friend-group ACL admits Bob, a deny clause overrides, and a name
    // outside the allow set stays out.
    std::vector<GroupDefinition> defs{GroupDefinition::parse("group: AliceFriends\nBob\n")};
    LocalResolver resolver(std::move(defs));

    ACL allowFriends = ACL::parse("allow: AliceFriends_G\n");
    CHECK(isAuthorized("Bob", allowFriends, resolver));

    ACL friendsButNotBob = ACL::parse("allow: AliceFriends_G\ndeny: Bob\n");
    CHECK_FALSE(isAuthorized("Bob", friendsButNotBob, resolver));

    ACL onlyBob = ACL::parse("allow: Bob\n");
    CHECK_FALSE(isAuthorized("Carol", onlyBob, resolver));
}

TEST_CASE("empty allow list denies everything") {
    CHECK_FALSE(authorized("Alice", ""));
    CHECK_FALSE(authorized("Alice", "deny: Bob\n"));
}

TEST_CASE("acl files parse with comments and lint deny terminators") {
    std::vector<std::string> warnings;
    ACL acl = ACL::parse("# owner list\nallow: Alice\n\nallow: Alice/TV\ndeny: Mallory/eob\n",
                         &warnings);
    CHECK(acl.allow.size() == 2);
    CHECK(acl.deny.size() == 1);
    REQUIRE(warnings.size() == 1);  // a terminated deny cannot cover extensions
    CHECK(warnings[0].find("Mallory") != std::string::npos);

    CHECK_THROWS_AS(ACL::parse("permit: Alice\n"), ParseError);
}

TEST_CASE("matcher agrees with the enumerated meaning over all small cases") {
    // Exhaustive: every group-free pattern and name of up to five components
    // over a four-symbol alphabet, terminated and unterminated.
    const std::vector<std::string> alphabet{"a", "b", "c", "d"};
    auto names = allSequences(alphabet, 5);

    std::vector<OraclePattern> patterns;
    for (const auto& seq : allSequences(alphabet, 5))
        patterns.push_back({seq, false});
    for (const auto& seq : allSequences(alphabet, 4))
        patterns.push_back({seq, true});

    std::vector<BlessingPattern> parsed;
    parsed.reserve(patterns.size());
    for (const auto& p : patterns) parsed.push_back(BlessingPattern::parse(p.text()));

    long long checked = 0, disagreements = 0;
    for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
        for (const auto& name : names) {
            bool expect = oracleMatch(patterns[pi], name);
            bool got = matchPattern(parsed[pi], std::span<const std::string>(name),
                                    nullResolver(), Mode::Under);
            if (expect != got) ++disagreements;
            ++checked;
        }
    }
    CHECK(disagreements == 0);
    CHECK(checked == static_cast<long long>(patterns.size() * names.size()));
}

TEST_CASE("every extension of a denied name stays denied") {
    std::mt19937_64 g(99);
    const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
    auto pick = [&] { return alphabet[g() % alphabet.size()]; };
    auto randomSeq = [&](std::size_t maxLen) {
        std::vector<std::string> s;
        std::size_t n = 1 + g() % maxLen;
        for (std::size_t i = 0; i < n; ++i) s.push_back(pick());
        return s;
    };

    int deniedByDeny = 0;
    for (int iter = 0; iter < 2000; ++iter) {
        ACL acl;
        std::size_t nAllow = 1 + g() % 3, nDeny = 1 + g() % 3;
        for (std::size_t i = 0; i < nAllow; ++i)
            acl.allow.push_back(BlessingPattern::parse(joined(randomSeq(3))));
        for (std::size_t i = 0; i < nDeny; ++i)
            acl.deny.push_back(BlessingPattern::parse(joined(randomSeq(3))));

        auto name = randomSeq(4);
        bool denyHit = false;
        for (const auto& p : acl.deny)
            denyHit = denyHit || matchPattern(p, std::span<const std::string>(name),
                                              nullResolver(), Mode::Over);
        if (!denyHit) continue;
        ++deniedByDeny;
        REQUIRE_FALSE(isAuthorized(joined(name), acl, nullResolver()));
        for (int e = 0; e < 5; ++e) {
            auto ext = name;
            std::size_t extra = 1 + g() % 3;
            for (std::size_t i = 0; i < extra; ++i) ext.push_back(pick());
            REQUIRE_FALSE(isAuthorized(joined(ext), acl, nullResolver()));
        }
    }
    CHECK(deniedByDeny > 200);  // the property was actually exercised
}

TEST_CASE("patterns classify their own shape") {
    CHECK(BlessingPattern::parse("...").isUniversal());
    CHECK_FALSE(BlessingPattern::parse("Alice").isUniversal());
    CHECK(BlessingPattern::parse("Alice/eob").endsWithEob());
    CHECK(BlessingPattern::parse("Alice").isGroupFree());
    CHECK_FALSE(BlessingPattern::parse("Staff_G/Desk").isGroupFree());
}
