#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "intentkit/preprocess.hpp"
#include "test_support.hpp"

using namespace intentkit;
using testing_support::Gen;

TEST(Scrub, FixedPermutationMapsDigits) {
    ScrubConfig cfg;
    std::array<char, 10> map{'3', '7', '2', '0', '4', '5', '6', '1', '8', '9'};  // 1->7, 0->3
    cfg.digit_map = map;
    EXPECT_EQ(scrub("pay $100", cfg), "pay $733");
}

TEST(Scrub, SeededPermutationIsAPermutation) {
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        auto p = digit_permutation(seed);
        std::set<char> s(p.begin(), p.end());
        EXPECT_EQ(s.size(), 10u);
        ScrubConfig cfg;
        cfg.seed = seed;
        auto out = scrub("0123456789", cfg);
        EXPECT_EQ(out, std::string(p.begin(), p.end()));
    }
}

TEST(Scrub, TextWithoutDigitsOrEmailsIsUnchanged) {
    ScrubConfig cfg;
    cfg.seed = 17;
    EXPECT_EQ(scrub("open a checking account", cfg), "open a checking account");
    EXPECT_EQ(scrub("at @ sign alone", cfg), "at @ sign alone");
}

TEST(Scrub, EmailLocalPartPerturbedDomainKept) {
    ScrubConfig cfg;
    cfg.seed = 5;
    auto out = scrub("mail a@b.com", cfg);
    auto table = letter_derangement(5);
    EXPECT_EQ(out, std::string("mail ") + table[0] + "@b.com");
    EXPECT_NE(out, "mail a@b.com");
}

TEST(Scrub, DerangementHasNoFixedPoints) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto t = letter_derangement(seed);
        for (int i = 0; i < 26; ++i) EXPECT_NE(t[static_cast<std::size_t>(i)], 'a' + i);
        std::set<char> s(t.begin(), t.end());
        EXPECT_EQ(s.size(), 26u);
    }
}

TEST(Scrub, DeterministicInTextAndSeed) {
    Gen g(1);
    for (int i = 0; i < 100; ++i) {
        auto text = g.sentence() + " " + std::to_string(g.integer(0, 100000)) + " x" + g.word() + "@mail.org";
        ScrubConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(g.integer(0, 1000));
        cfg.digit_scramble = g.coin() ? DigitScramble::per_digit_random : DigitScramble::fixed_permutation;
        EXPECT_EQ(scrub(text, cfg), scrub(text, cfg));
    }
}

TEST(Normalize, Basics) {
    EXPECT_EQ(normalize("Open  Account "), "open account");
    EXPECT_EQ(normalize("OPEN"), "open");
    EXPECT_EQ(normalize("open account"), "open account");
    EXPECT_EQ(normalize("\t a\n\nb  "), "a b");
}

TEST(Normalize, Idempotent) {
    Gen g(2);
    for (int i = 0; i < 200; ++i) {
        std::string s;
        for (std::size_t k = 0, n = g.size(0, 30); k < n; ++k) s.push_back(g.pick(std::vector<char>{'A', 'b', ' ', '\t', 'Z', '1', '\n'}));
        EXPECT_EQ(normalize(normalize(s)), normalize(s));
    }
}

TEST(Dedupe, KeepsFirstOccurrence) {
    std::vector<Query> qs;
    for (auto t : {"a", "a", "b"}) qs.push_back(make_query(t, QuerySource::unlabeled));
    auto c = dedupe(qs);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.queries()[0].normalized, "a");
    EXPECT_EQ(c.queries()[1].normalized, "b");
}

TEST(Dedupe, SizeMatchesDistinctCount) {
    Gen g(3);
    std::vector<Query> qs;
    std::vector<std::string> pool;
    for (int i = 0; i < 7000; ++i) pool.push_back(g.sentence(2, 6));
    std::set<std::string> distinct;
    for (int i = 0; i < 10000; ++i) {
        auto t = i < 7000 ? pool[static_cast<std::size_t>(i)] : g.pick(pool);
        qs.push_back(make_query(t, QuerySource::unlabeled));
        distinct.insert(qs.back().normalized);
    }
    auto c = dedupe(qs);
    EXPECT_EQ(c.size(), distinct.size());
    std::vector<Query> again(c.begin(), c.end());
    EXPECT_EQ(dedupe(again).queries(), c.queries());
}

TEST(Tokenize, StopwordsAndShortTokens) {
    EXPECT_EQ(tokenize_for_eval("how do i open an account"), (std::vector<std::string>{"open", "account"}));
    EXPECT_EQ(tokenize_for_eval("pay 100"), (std::vector<std::string>{"pay"}));
    EXPECT_TRUE(tokenize_for_eval("go to it").empty());
    EXPECT_EQ(tokenize_for_eval("zelle-payment, now!"), (std::vector<std::string>{"zelle", "payment"}));
}

TEST(Tokenize, BundledListHas179Words) {
    const auto& list = StopwordList::bundled_english();
    EXPECT_EQ(list.words.size(), 179u);
    EXPECT_EQ(list.identifier, "nltk-english-179");
    EXPECT_EQ(list.hash.size(), 16u);
}

TEST(Tokenize, OutputRespectsEveryFilter) {
    Gen g(4);
    const auto& stop = StopwordList::bundled_english();
    std::vector<std::string> words(stop.words.begin(), stop.words.end());
    for (int i = 0; i < 300; ++i) {
        std::string text;
        for (std::size_t k = 0, n = g.size(0, 12); k < n; ++k) {
            switch (g.integer(0, 3)) {
                case 0: text += g.pick(words); break;
                case 1: text += std::to_string(g.integer(0, 9999)); break;
                case 2: text += g.word(1, 6); break;
                default: text += g.pick(std::vector<std::string>{",", "!", "-", "'s", "a1", "$"}); break;
            }
            text += g.coin() ? " " : "";
        }
        for (const auto& tok : tokenize_for_eval(normalize(text))) {
            EXPECT_EQ(stop.words.count(tok), 0u) << tok;
            EXPECT_GE(std::count_if(tok.begin(), tok.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }), 3) << tok;
            EXPECT_FALSE(std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }));
            EXPECT_TRUE(std::all_of(tok.begin(), tok.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); }));
        }
    }
}

TEST(Sanitize, ReplacesInvalidUtf8) {
    EXPECT_EQ(sanitize_utf8("ok"), "ok");
    EXPECT_EQ(sanitize_utf8("caf\xC3\xA9"), "caf\xC3\xA9");
    EXPECT_EQ(sanitize_utf8("bad\xFF"), "bad\xEF\xBF\xBD");
}
