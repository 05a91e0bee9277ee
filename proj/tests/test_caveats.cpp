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

#include "helpers.hpp"

using namespace vcred;

namespace {

RequestContext contextAt(std::int64_t t) {
    RequestContext con;
    con.timestamp = t;
    return con;
}

// 2023-11-20 was a Monday; 09:00 UTC that day.
constexpr std::int64_t kMonday9h = 1'700'470'800;

}  // namespace

TEST_CASE("expiry caveat compares against the context clock") {
    Caveat c = expiryCaveat(1000);
    CHECK(validateFirstPartyCaveat(c, contextAt(999)));
    CHECK(validateFirstPartyCaveat(c, contextAt(1000)));
    CHECK_FALSE(validateFirstPartyCaveat(c, contextAt(1001)));

    RequestContext skewed = contextAt(1020);
    skewed.clockSkewSeconds = 30;
    CHECK(validateFirstPartyCaveat(c, skewed));
}

TEST_CASE("method caveat admits listed methods only") {
    Caveat c = methodCaveat({"Lock", "Unlock"});
    RequestContext con = contextAt(0);
    con.method = "Unlock";
    CHECK(validateFirstPartyCaveat(c, con));
    con.method = "Claim";
    CHECK_FALSE(validateFirstPartyCaveat(c, con));
    con.method = "";
    CHECK_FALSE(validateFirstPartyCaveat(c, con));
}

TEST_CASE("peer caveat checks who we are talking to") {
    Caveat c = peerCaveat({BlessingPattern::parse("SomeCorp/VideoService")});
    RequestContext con = contextAt(0);
    con.localBlessingNames = {"SomeCorp/VideoService/Frontend"};
    CHECK(validateFirstPartyCaveat(c, con));
    con.localBlessingNames = {"OtherCorp/Service"};
    CHECK_FALSE(validateFirstPartyCaveat(c, con));
    con.localBlessingNames.clear();
    CHECK_FALSE(validateFirstPartyCaveat(c, con));
}

TEST_CASE("weekly schedule window in the configured zone") {
    Caveat mondayMorning = weeklyScheduleCaveat(0, 8, 10);

    CHECK(validateFirstPartyCaveat(mondayMorning, contextAt(kMonday9h)));
    CHECK_FALSE(validateFirstPartyCaveat(mondayMorning, contextAt(kMonday9h + 86400)));  // Tuesday
    CHECK_FALSE(validateFirstPartyCaveat(mondayMorning, contextAt(kMonday9h + 2 * 3600)));  // 11h

    // The same instant read in UTC+2 falls at 11:00, outside the window.
    RequestContext shifted = contextAt(kMonday9h);
    shifted.utcOffsetMinutes = 120;
    CHECK_FALSE(validateFirstPartyCaveat(mondayMorning, shifted));
}

TEST_CASE("unknown caveat types fail closed with a diagnostic") {
    Caveat unknown{0xee, toBytes("whatever")};
    std::string diag;
    CHECK_FALSE(validateFirstPartyCaveat(unknown, contextAt(0), CaveatRegistry::global(), &diag));
    CHECK(diag.find("unrecognized") != std::string::npos);

    CaveatCheck check = CaveatRegistry::global().validateFirstParty(unknown, contextAt(0));
    CHECK(check.unrecognized);
}

TEST_CASE("malformed caveat payloads fail closed") {
    Caveat garbled{kCaveatExpiry, toBytes("xx")};  // too short for a timestamp
    CHECK_FALSE(validateFirstPartyCaveat(garbled, contextAt(0)));
}

TEST_CASE("services may register their own caveat types once") {
    CaveatRegistry reg;
    reg.registerValidator(0x90, [](ByteView payload, const RequestContext&, std::string*) {
        return !payload.empty() && payload[0] == 'y';
    });
    Caveat yes{0x90, toBytes("y")};
    Caveat no{0x90, toBytes("n")};
    CHECK(validateFirstPartyCaveat(yes, contextAt(0), reg));
    CHECK_FALSE(validateFirstPartyCaveat(no, contextAt(0), reg));

    CHECK_THROWS_AS(reg.registerValidator(0x90, [](ByteView, const RequestContext&, std::string*) {
        return true;
    }), Error);
    // The range below 0x80 belongs to the library.
    CHECK_THROWS_AS(reg.registerValidator(0x05, [](ByteView, const RequestContext&, std::string*) {
        return true;
    }), Error);
}

TEST_CASE("empty caveat lists validate vacuously") {
    CHECK(validateCaveats({}, contextAt(0)).ok);
}

TEST_CASE("third-party caveats round-trip through their envelope") {
    KeyPair discharger = generateKeyPair();
    Caveat enveloped = makeThirdPartyCaveat(discharger.pub, expiryCaveat(500), "host:1");
    ThirdPartyCaveat tc = decodeThirdPartyCaveat(enveloped);
    CHECK(tc.dischargerKey == discharger.pub);
    CHECK(tc.location == "host:1");
    CHECK(tc.nonce.size() == kTpcNonceSize);

    // Two mints of the same logical caveat still differ by nonce.
    Caveat again = makeThirdPartyCaveat(discharger.pub, expiryCaveat(500), "host:1");
    CHECK_FALSE(enveloped.payload == again.payload);
}

TEST_CASE("discharges are minted only when the check holds") {
    KeyPair discharger = generateKeyPair();
    Caveat enveloped = makeThirdPartyCaveat(discharger.pub, expiryCaveat(1000), "host:1");
    ThirdPartyCaveat tc = decodeThirdPartyCaveat(enveloped);

    Discharge d = mintDischarge(discharger.sec, tc, {expiryCaveat(2000)}, contextAt(900));
    CHECK(verifyDischarge(tc, d));

    CHECK_THROWS_AS(mintDischarge(discharger.sec, tc, {}, contextAt(1500)), RefusalError);

    KeyPair imposter = generateKeyPair();
    CHECK_THROWS_AS(mintDischarge(imposter.sec, tc, {}, contextAt(900)), AuthorityError);
}

TEST_CASE("a discharge satisfies exactly the caveat it was minted for") {
    KeyPair discharger = generateKeyPair();
    std::mt19937_64 g(5);
    for (int i = 0; i < 40; ++i) {
        ThirdPartyCaveat tc1 =
            decodeThirdPartyCaveat(makeThirdPartyCaveat(discharger.pub, expiryCaveat(1000), "a:1"));
        ThirdPartyCaveat tc2 =
            decodeThirdPartyCaveat(makeThirdPartyCaveat(discharger.pub, expiryCaveat(1000), "a:1"));
        Discharge d = mintDischarge(discharger.sec, tc1, {}, contextAt(1));
        CHECK(verifyDischarge(tc1, d));
        CHECK_FALSE(verifyDischarge(tc2, d));  // same discharger, same check — still no

        RequestContext con = contextAt(1);
        con.discharges.add(tc1, d);
        CHECK(validateCaveats({Caveat{kCaveatThirdParty, canonicalEncode(tc1)}}, con).ok);
        CHECK_FALSE(validateCaveats({Caveat{kCaveatThirdParty, canonicalEncode(tc2)}}, con).ok);
    }
    (void)g;
}

TEST_CASE("stripping a discharge's restrictions breaks its signature") {
    KeyPair discharger = generateKeyPair();
    ThirdPartyCaveat tc =
        decodeThirdPartyCaveat(makeThirdPartyCaveat(discharger.pub, expiryCaveat(1000), "a:1"));
    Discharge d = mintDischarge(discharger.sec, tc, {expiryCaveat(50)}, contextAt(1));
    Discharge stripped = d;
    stripped.caveats.clear();
    CHECK(verifyDischarge(tc, d));
    CHECK_FALSE(verifyDischarge(tc, stripped));
}

TEST_CASE("an expired discharge no longer satisfies its caveat") {
    KeyPair discharger = generateKeyPair();
    ThirdPartyCaveat tc =
        decodeThirdPartyCaveat(makeThirdPartyCaveat(discharger.pub, expiryCaveat(10'000), "a:1"));
    Discharge shortLived = mintDischarge(discharger.sec, tc, {expiryCaveat(100)}, contextAt(1));

    Caveat enveloped{kCaveatThirdParty, canonicalEncode(tc)};
    RequestContext fresh = contextAt(50);
    fresh.discharges.add(tc, shortLived);
    CHECK(validateCaveats({enveloped}, fresh).ok);

    RequestContext later = contextAt(150);  // fetched near the phone, used later
    later.discharges.add(tc, shortLived);
    CHECK_FALSE(validateCaveats({enveloped}, later).ok);
}

TEST_CASE("discharges may require discharges, to a depth limit") {
    KeyPair outer = generateKeyPair();
    KeyPair inner = generateKeyPair();

    ThirdPartyCaveat innerTc =
        decodeThirdPartyCaveat(makeThirdPartyCaveat(inner.pub, expiryCaveat(1000), "inner:1"));
    ThirdPartyCaveat outerTc =
        decodeThirdPartyCaveat(makeThirdPartyCaveat(outer.pub, expiryCaveat(1000), "outer:1"));

    Discharge outerD = mintDischarge(
        outer.sec, outerTc, {Caveat{kCaveatThirdParty, canonicalEncode(innerTc)}}, contextAt(1));

    Caveat enveloped{kCaveatThirdParty, canonicalEncode(outerTc)};
    RequestContext missingInner = contextAt(1);
    missingInner.discharges.add(outerTc, outerD);
    CHECK_FALSE(validateCaveats({enveloped}, missingInner).ok);

    RequestContext complete = contextAt(1);
    complete.discharges.add(outerTc, outerD);
    complete.discharges.add(innerTc, mintDischarge(inner.sec, innerTc, {}, contextAt(1)));
    CHECK(validateCaveats({enveloped}, complete).ok);
}

TEST_CASE("self-referential discharge chains bottom out at the depth cap") {
    // A discharge that demands its own caveat again can never terminate; the
    // cap turns it into a clean denial.
    KeyPair discharger = generateKeyPair();
    ThirdPartyCaveat tc =
        decodeThirdPartyCaveat(makeThirdPartyCaveat(discharger.pub, expiryCaveat(1000), "a:1"));
    Caveat enveloped{kCaveatThirdParty, canonicalEncode(tc)};
    Discharge selfDemanding = mintDischarge(discharger.sec, tc, {enveloped}, contextAt(1));

    RequestContext con = contextAt(1);
    con.discharges.add(tc, selfDemanding);
    CaveatCheck check = validateCaveats({enveloped}, con);
    CHECK_FALSE(check.ok);
}

TEST_CASE("adding caveats never turns a failing validation into a pass") {
    std::mt19937_64 g(21);
    for (int i = 0; i < 300; ++i) {
        std::vector<Caveat> clist;
        std::int64_t now = 5000;
        int n = static_cast<int>(g() % 4);
        for (int k = 0; k < n; ++k) {
            switch (g() % 3) {
                case 0: clist.push_back(expiryCaveat(static_cast<std::int64_t>(g() % 10'000))); break;
                case 1: clist.push_back(methodCaveat({vtest::randomName(g)})); break;
                default: clist.push_back(Caveat{0xef, {}}); break;  // unknown type
            }
        }
        RequestContext con = contextAt(now);
        con.method = "Call";
        bool before = validateCaveats(clist, con).ok;
        clist.push_back(expiryCaveat(static_cast<std::int64_t>(g() % 10'000)));
        bool after = validateCaveats(clist, con).ok;
        // after may flip true -> false, never false -> true
        if (!before) REQUIRE_FALSE(after);
    }
}

TEST_CASE("validation result names the failing conjunct") {
    std::mt19937_64 g(31);
    vtest::ChainFixture fx = vtest::randomChain(g, 2);
    RootSet roots;
    roots.add(root(fx.blessing));

    RequestContext con = contextAt(systemNow());
    CHECK(validateBlessing(fx.blessing, roots, con).ok());

    RootSet empty;
    ValidationResult unrec = validateBlessing(fx.blessing, empty, con);
    CHECK(unrec.failure == ValidationResult::Failure::UnrecognizedRoot);

    Blessing tampered = fx.blessing;
    tampered.chain.back().name += "x";
    ValidationResult bad = validateBlessing(tampered, roots, con);
    CHECK(bad.failure == ValidationResult::Failure::InvalidChain);

    Blessing expired =
        bless(vtest::pooledKey(1).pub, fx.keys.back().sec, fx.blessing, "leaf", {expiryCaveat(10)});
    ValidationResult cav = validateBlessing(expired, roots, con);
    CHECK(cav.failure == ValidationResult::Failure::CaveatFailed);
}
