#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "intentkit/error.hpp"
#include "intentkit/model.hpp"
#include "intentkit/rng.hpp"
#include "test_support.hpp"

using namespace intentkit;

namespace {

Intent make_intent(std::string topic, std::string sub, std::vector<std::string> ex, Provenance p = Provenance::generated) {
    Intent i;
    i.topic = std::move(topic);
    i.subtopic = std::move(sub);
    i.examples = std::move(ex);
    i.relevance = 50;
    i.provenance = p;
    return i;
}

}  // namespace

TEST(IntentKey, ParsesOnFirstDot) {
    auto k = IntentKey::parse("openAccount.openChecking.extra");
    ASSERT_TRUE(k);
    EXPECT_EQ(k->topic, "openAccount");
    EXPECT_EQ(k->subtopic, "openChecking.extra");
    EXPECT_FALSE(IntentKey::parse("noDot"));
    EXPECT_FALSE(IntentKey::parse(".x"));
    EXPECT_FALSE(IntentKey::parse("x."));
}

TEST(IntentSet, MutationsBumpVersionAndHistory) {
    IntentSet set;
    set.add(make_intent("a", "b", {"x", "y"}), "act-1");
    EXPECT_EQ(set.version(), 1u);
    auto i = *set.find({"a", "b"});
    i.examples.push_back("z");
    set.update(i, "act-2");
    set.retire({"a", "b"}, "act-3");
    EXPECT_EQ(set.version(), 3u);
    EXPECT_EQ(set.history(), (std::vector<std::string>{"act-1", "act-2", "act-3"}));
    EXPECT_EQ(set.active_count(), 0u);
    EXPECT_EQ(set.size(), 1u);
}

TEST(IntentSet, RejectsDuplicateKey) {
    IntentSet set;
    set.add(make_intent("a", "b", {"x", "y"}), "1");
    EXPECT_THROW(set.add(make_intent("a", "b", {"x", "y"}), "2"), InvariantViolation);
}

TEST(IntentSet, RejectsOutOfRangeRelevance) {
    auto i = make_intent("a", "b", {"x", "y"});
    i.relevance = 150;
    try {
        check_intent(i);
        FAIL();
    } catch (const InvariantViolation& e) {
        EXPECT_EQ(e.invariant(), "relevance_range");
    }
}

TEST(IntentSet, GeneratedIntentNeedsTwoExamples) {
    EXPECT_THROW(check_intent(make_intent("a", "b", {"x"})), InvariantViolation);
    EXPECT_NO_THROW(check_intent(make_intent("a", "b", {"x"}, Provenance::proposed)));
    auto retired = make_intent("a", "b", {"x"});
    retired.status = IntentStatus::retired;
    EXPECT_NO_THROW(check_intent(retired));
}

TEST(IntentSet, RetiredExamplesCannotBeDropped) {
    IntentSet set;
    set.add(make_intent("a", "b", {"x", "y"}), "1");
    set.retire({"a", "b"}, "2");
    auto i = *set.find({"a", "b"});
    i.examples = {"x"};
    EXPECT_THROW(set.update(i, "3"), InvariantViolation);
}

TEST(Corpus, DedupesById) {
    Corpus c;
    Query q;
    q.normalized = "open account";
    EXPECT_TRUE(c.add(q));
    EXPECT_FALSE(c.add(q));
    EXPECT_EQ(c.size(), 1u);
    EXPECT_EQ(c.queries()[0].id, query_id("open account"));
    EXPECT_NE(c.find_normalized("open account"), nullptr);
    EXPECT_EQ(c.find_normalized("close account"), nullptr);
}

TEST(Rng, UniformStaysInBoundsAndIsSeeded) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        auto x = a.uniform(7);
        EXPECT_LT(x, 7u);
        EXPECT_EQ(x, b.uniform(7));
    }
}

TEST(Rng, SampleIndicesAreDistinct) {
    Rng r(1);
    auto idx = r.sample_indices(50, 20);
    std::set<std::size_t> s(idx.begin(), idx.end());
    EXPECT_EQ(s.size(), 20u);
    EXPECT_EQ(r.sample_indices(3, 10).size(), 3u);
}

TEST(Rng, ShuffleIsAPermutation) {
    testing_support::Gen g(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> v(g.size(0, 30));
        std::iota(v.begin(), v.end(), 0);
        auto copy = v;
        g.rng().shuffle(v);
        std::sort(v.begin(), v.end());
        EXPECT_EQ(v, copy);
    }
}

TEST(Rng, DerivedSeedsDiffer) {
    EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
    EXPECT_NE(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
    EXPECT_EQ(derive_seed(9, "x", 3), derive_seed(9, "x", 3));
}

TEST(Fnv, KnownVectors) {
    // Reference values of 64-bit FNV-1a.
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(to_hex(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(AuditLog, UnclosedRecordsAreWrittenOnDestruction) {
    testing_support::TempDir dir("audit");
    const auto path = dir / "audit.jsonl";
    {
        AuditLog log(path, AuditLog::logical_clock());
        AuditRecord r;
        r.agent = "merger";
        log.open(r);
        auto seq = log.open(r);
        log.close(seq, "accepted", 4);
        EXPECT_EQ(log.size(), 2u);
    }
    auto text = testing_support::read_text(path);
    EXPECT_NE(text.find("\"verdict\":\"accepted\""), std::string::npos);
    EXPECT_NE(text.find("\"verdict\":\"unclosed\""), std::string::npos);
    EXPECT_NE(text.find("tick-00000001"), std::string::npos);
}

TEST(AuditLog, CountNeverDecreases) {
    AuditLog log;
    std::size_t last = 0;
    testing_support::Gen g(3);
    std::vector<std::uint64_t> open;
    for (int i = 0; i < 200; ++i) {
        if (open.empty() || g.coin()) {
            open.push_back(log.open({}));
        } else {
            log.close(open.back(), "x", 0);
            open.pop_back();
        }
        EXPECT_GE(log.size(), last);
        last = log.size();
    }
}
