#include <gtest/gtest.h>

#include "intentkit/error.hpp"
#include "intentkit/structured.hpp"
#include "test_support.hpp"

using namespace intentkit;
using FK = FieldKind;

namespace {

Schema merger_schema() {
    Schema s;
    s.fields = {
        {"Reasoning_across_topics", FK::scalar, false, {}},
        {"Reasoning_within_topics", FK::scalar, false, {}},
        {"Pair", FK::string_list, true, {}},
        {"Keep", FK::scalar, true, {}},
        {"Keep Examples", FK::string_list, true, {}},
        {"Eliminate", FK::scalar, true, {}},
        {"Eliminate Examples", FK::string_list, true, {}},
        {"Valid", FK::boolean, true, {}},
    };
    s.validity_key = "Valid";
    return s;
}

Schema generator_schema() {
    Schema s;
    s.fields = {
        {"data_reasoning", FK::scalar, false, {}},
        {"overall_topic", FK::scalar, true, {}},
        {"overall_topic_description", FK::scalar, true, {}},
        {"sub_topics", FK::map_list, true,
         {{"sub_topic", FK::scalar, true, {}},
          {"description", FK::scalar, true, {}},
          {"examples", FK::string_list, true, {}},
          {"relevance", FK::integer, true, {}}}},
    };
    return s;
}

Schema utterance_schema() {
    Schema s;
    s.dialect = Dialect::json;
    s.fields = {
        {"label", FK::scalar, true, {}},
        {"reflection", FK::scalar, false, {}},
        {"generated_utterances", FK::map_list, true,
         {{"reasoning", FK::scalar, true, {}}, {"utterance", FK::scalar, true, {}}, {"explanation", FK::scalar, true, {}}}},
    };
    return s;
}

const char* kMergeValid = R"(Here is my answer.
```yaml
Reasoning_across_topics: Both cover opening checking.
Reasoning_within_topics: none
Pair: (openAccount.openChecking, newAccounts.checking)
Keep: (openAccount.openChecking)
Keep Examples:
- "open checking account"
- open new checking
  account today
Eliminate: newAccounts.checking
Eliminate Examples:
-"new checking"
Valid: True
```
Let me know if you need anything else.)";

}  // namespace

TEST(Structured, MergerValidAnswer) {
    auto r = parse_structured(kMergeValid, merger_schema());
    EXPECT_TRUE(r.self_valid);
    EXPECT_EQ(r.payload["Pair"], (nlohmann::json{"openAccount.openChecking", "newAccounts.checking"}));
    EXPECT_EQ(r.payload["Keep"], "openAccount.openChecking");
    EXPECT_EQ(r.payload["Keep Examples"], (nlohmann::json{"open checking account", "open new checking account today"}));
    EXPECT_EQ(r.payload["Eliminate Examples"], (nlohmann::json{"new checking"}));
    EXPECT_TRUE(r.payload["Valid"].get<bool>());
}

TEST(Structured, MergerFalseIsSelfInvalid) {
    auto r = parse_structured("Reasoning_across_topics: all distinct\nPair: []\nKeep:\nEliminate:\nValid: False\n",
                              merger_schema());
    EXPECT_FALSE(r.self_valid);
}

TEST(Structured, MissingRequiredKey) {
    std::string text = kMergeValid;
    auto pos = text.find("Keep Examples:");
    text.replace(pos, 14, "Kept stuff:");
    try {
        parse_structured(text, merger_schema());
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.kind(), ParseError::Kind::missing_key);
        EXPECT_NE(std::string(e.what()).find("Keep Examples"), std::string::npos);
    }
}

TEST(Structured, BadEnumForValidity) {
    try {
        parse_structured("Pair: [a.b, c.d]\nKeep: a.b\nKeep Examples:\n- x\nEliminate: c.d\nEliminate Examples:\n- y\nValid: maybe\n",
                         merger_schema());
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.kind(), ParseError::Kind::bad_enum);
    }
}

TEST(Structured, KeyFormsAreTolerant) {
    auto r = parse_structured("**pair:** [a.b, c.d]\nKEEP: a.b\nkeep_examples:\n- x\nEliminate: c.d\n"
                              "Eliminate  Examples: [\"y\", \"z\"]\n**Valid**: \"True\"\n",
                              merger_schema());
    EXPECT_TRUE(r.self_valid);
    EXPECT_EQ(r.payload["Eliminate Examples"], (nlohmann::json{"y", "z"}));
}

TEST(Structured, GeneratorNestedList) {
    const char* text = R"(data_reasoning: "Customers want to open accounts"
overall_topic: "openAccount"
overall_topic_description: "Opening accounts"
sub_topics:
  - sub_topic: "openChecking"
    description: "Checking accounts"
    examples:
      - "open checking account"
      - "open new checking account"
    relevance: 98
  - sub_topic: openSavings
    description: Savings
    examples: ["open savings", "new savings account"]
    relevance: [75]
)";
    auto r = parse_structured(text, generator_schema());
    const auto& subs = r.payload["sub_topics"];
    ASSERT_EQ(subs.size(), 2u);
    EXPECT_EQ(subs[0]["sub_topic"], "openChecking");
    EXPECT_EQ(subs[0]["examples"], (nlohmann::json{"open checking account", "open new checking account"}));
    EXPECT_EQ(subs[0]["relevance"], 98);
    EXPECT_EQ(subs[1]["examples"].size(), 2u);
    EXPECT_EQ(subs[1]["relevance"], 75);
}

TEST(Structured, GeneratorItemMissingChildKey) {
    const char* text = "overall_topic: a\noverall_topic_description: b\nsub_topics:\n  - sub_topic: x\n    examples:\n"
                       "      - p\n      - q\n    relevance: 3\n";
    EXPECT_THROW(parse_structured(text, generator_schema()), ParseError);
}

TEST(Structured, GenerationJsonWithFiveUtterances) {
    std::string text = "Sure!\n```json\n{\"label\": \"openChecking\", \"reflection\": \"r {braces} in text\", "
                       "\"generated_utterances\": [";
    for (int i = 0; i < 5; ++i)
        text += std::string(i ? "," : "") + "{\"reasoning\":\"r" + std::to_string(i) + "\",\"utterance\":\"u" +
                std::to_string(i) + "\",\"explanation\":\"e\"}";
    text += "]}\n```";
    auto r = parse_structured(text, utterance_schema());
    ASSERT_EQ(r.payload["generated_utterances"].size(), 5u);
    EXPECT_EQ(r.payload["generated_utterances"][4]["utterance"], "u4");
}

TEST(Structured, JsonMissingChildKey) {
    EXPECT_THROW(parse_structured(R"({"label":"x","generated_utterances":[{"utterance":"u"}]})", utterance_schema()),
                 ParseError);
    EXPECT_THROW(parse_structured("no json here", utterance_schema()), ParseError);
    EXPECT_THROW(parse_structured("{\"label\": ", utterance_schema()), ParseError);
}

TEST(Structured, StripScalar) {
    EXPECT_EQ(strip_scalar(" \"abc\" "), "abc");
    EXPECT_EQ(strip_scalar("[85]"), "85");
    EXPECT_EQ(strip_scalar("(a.b)"), "a.b");
    EXPECT_EQ(strip_scalar("[\"x\"]"), "x");
    EXPECT_EQ(strip_scalar("plain"), "plain");
}

// Mutated answers: whenever a payload comes back valid, every required key is there.
TEST(Structured, FuzzNeverReturnsPayloadMissingRequiredKey) {
    testing_support::Gen g(2024);
    const auto schema = merger_schema();
    std::vector<std::string> lines;
    {
        std::string s = kMergeValid;
        std::size_t p = 0;
        while (p <= s.size()) {
            auto nl = s.find('\n', p);
            lines.push_back(s.substr(p, nl == std::string::npos ? std::string::npos : nl - p));
            p = nl == std::string::npos ? s.size() + 1 : nl + 1;
        }
    }
    int parsed_ok = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        auto mutated = lines;
        for (int k = 0, n = g.integer(1, 4); k < n && !mutated.empty(); ++k) {
            auto i = static_cast<std::size_t>(g.integer(0, static_cast<int>(mutated.size()) - 1));
            switch (g.integer(0, 4)) {
                case 0: mutated.erase(mutated.begin() + static_cast<long>(i)); break;
                case 1: mutated[i] = "  " + mutated[i]; break;
                case 2: if (!mutated[i].empty()) mutated[i].erase(static_cast<std::size_t>(g.integer(0, static_cast<int>(mutated[i].size()) - 1)), 1); break;
                case 3: mutated.insert(mutated.begin() + static_cast<long>(i), g.sentence()); break;
                default: std::swap(mutated[i], mutated[static_cast<std::size_t>(g.integer(0, static_cast<int>(mutated.size()) - 1))]); break;
            }
        }
        std::string text;
        for (const auto& l : mutated) text += l + "\n";
        try {
            auto r = parse_structured(text, schema);
            ++parsed_ok;
            if (r.self_valid)
                for (const auto& f : schema.fields)
                    if (f.required) EXPECT_TRUE(r.payload.contains(f.key)) << f.key << "\n" << text;
        } catch (const ParseError&) {
        }
    }
    EXPECT_GT(parsed_ok, 0);
}
