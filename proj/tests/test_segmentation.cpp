#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "tracevae/rng.hpp"
#include "tracevae/segment.hpp"
#include "tracevae/vocab.hpp"

using namespace tracevae;

TEST(Vocab, CharLevelSmall) {
    Vocab v = build_vocab({"ab", "ba"}, TokenLevel::character);
    EXPECT_EQ(v.size(), 7u);
    EXPECT_EQ(v.token(kPad), "<pad>");
    EXPECT_EQ(v.token(kUnk), "<unk>");
    EXPECT_NE(v.id("a"), kUnk);
    EXPECT_NE(v.id("b"), kUnk);
    EXPECT_EQ(v.id("z"), kUnk);
}

TEST(Vocab, WordLevelSingle) {
    Vocab v = build_vocab({"x"}, TokenLevel::word);
    EXPECT_EQ(v.size(), 6u);
    EXPECT_EQ(v.id("x"), 5u);
}

TEST(Vocab, FrequencyThenLexicographic) {
    Vocab v = build_vocab({"cbb", "a", "c"}, TokenLevel::character);
    EXPECT_EQ(v.token(5), "b");
    EXPECT_EQ(v.token(6), "c");
    EXPECT_EQ(v.token(7), "a");
}

TEST(Vocab, RejectsEmptyCorpus) {
    EXPECT_THROW(build_vocab({}, TokenLevel::character), std::invalid_argument);
}

TEST(Vocab, SizeCapMapsTailToUnk) {
    Vocab v = build_vocab({"aaab", "c"}, TokenLevel::character, 6);
    EXPECT_EQ(v.size(), 6u);
    EXPECT_EQ(v.id("c"), kUnk);
}

TEST(Vocab, SyntheticCorpusDistinctCount) {
    RngStream rng(1);
    std::vector<std::string> corpus;
    std::set<char> distinct;
    for (int i = 0; i < 1000; ++i) {
        std::string line;
        const std::size_t n = 1 + rng.below(20);
        for (std::size_t k = 0; k < n; ++k) line.push_back(static_cast<char>('a' + rng.below(26)));
        for (char ch : line) distinct.insert(ch);
        corpus.push_back(line);
    }
    Vocab v = build_vocab(corpus, TokenLevel::character);
    EXPECT_EQ(v.size(), distinct.size() + kNumReserved);
}

TEST(Vocab, EncodeDecodeAndFileRoundTrip) {
    Vocab v = build_vocab({"hello world"}, TokenLevel::character);
    const auto ids = v.encode("hello");
    EXPECT_EQ(v.decode(ids), "hello");
    const auto path = std::filesystem::temp_directory_path() / "tracevae_vocab_test.txt";
    v.save(path.string());
    Vocab w = Vocab::load(path.string(), TokenLevel::character);
    EXPECT_EQ(w.size(), v.size());
    for (TokenId i = 0; i < v.size(); ++i) EXPECT_EQ(w.token(i), v.token(i));
    std::filesystem::remove(path);
}

TEST(Segment, FixedTwoOverFiveTokens) {
    auto s = segment({5, 6, 7, 8, 9}, SegmentPolicy::fixed(2));
    EXPECT_EQ(s.num_segments(), 3u);
    EXPECT_EQ(s.length(), 8u);
    EXPECT_EQ(s.boundaries, (std::vector<std::size_t>{0, 3, 6}));
    EXPECT_EQ(s.sep_positions, (std::vector<std::size_t>{2, 5, 7}));
    for (auto p : s.sep_positions) EXPECT_EQ(s.ids[p], kSep);
}

TEST(Segment, FixedTenOverTenTokens) {
    std::vector<TokenId> ids(10, 7);
    auto s = segment(ids, SegmentPolicy::fixed(10));
    EXPECT_EQ(s.num_segments(), 1u);
    EXPECT_EQ(std::count(s.ids.begin(), s.ids.end(), kSep), 1);
}

TEST(Segment, SentencePolicy) {
    Vocab v = build_vocab({"a . b ."}, TokenLevel::word);
    auto s = segment(v.encode("a . b ."), SegmentPolicy::sentence({v.id(".")}));
    EXPECT_EQ(s.num_segments(), 2u);
}

TEST(Segment, Errors) {
    EXPECT_THROW(segment({5, 6}, SegmentPolicy::fixed(0)), std::invalid_argument);
    EXPECT_THROW(segment({}, SegmentPolicy::fixed(2)), std::invalid_argument);
    EXPECT_THROW(segment({5, kSep}, SegmentPolicy::fixed(2)), std::invalid_argument);
}

TEST(Segment, StripRoundTrip) {
    RngStream rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TokenId> ids(1 + rng.below(40));
        for (auto &t : ids) t = static_cast<TokenId>(kNumReserved + rng.below(20));
        auto s = segment(ids, SegmentPolicy::fixed(1 + rng.below(12)));
        EXPECT_EQ(strip_separators(s), ids);
        EXPECT_EQ(from_separated(s.ids), s);
    }
}

TEST(Masks, TwoSegmentsOfTwo) {
    auto s = segment({5, 6, 7, 8}, SegmentPolicy::fixed(2));
    ASSERT_EQ(s.length(), 6u);
    auto m = build_masks(s);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(m.extra(0, j), j <= 2) << j;
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(m.intra(3, j), j >= 3) << j;
}

TEST(Masks, SingleSegmentAllTrue) {
    auto s = segment({5, 6, 7}, SegmentPolicy::fixed(10));
    auto m = build_masks(s);
    for (std::size_t i = 0; i < s.length(); ++i)
        for (std::size_t j = 0; j < s.length(); ++j) {
            EXPECT_TRUE(m.extra(i, j));
            EXPECT_TRUE(m.intra(i, j));
        }
}

TEST(Masks, BruteForceOracleAndInvariants) {
    RngStream rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t k = 1 + rng.below(10);
        std::vector<TokenId> ids(1 + rng.below(40));
        for (auto &t : ids) t = static_cast<TokenId>(kNumReserved + rng.below(9));
        auto s = segment(ids, SegmentPolicy::fixed(k));
        const auto seg = oracle::membership({s.ids.begin(), s.ids.end()}, static_cast<int>(kSep));
        auto m = build_masks(s);
        for (std::size_t i = 0; i < s.length(); ++i) {
            EXPECT_TRUE(m.extra(i, i));
            EXPECT_TRUE(m.intra(i, i));
            for (std::size_t j = 0; j < s.length(); ++j) {
                ASSERT_EQ(m.extra(i, j), seg[j] <= seg[i]);
                ASSERT_EQ(m.intra(i, j), seg[j] == seg[i]);
                if (m.intra(i, j)) {
                    ASSERT_TRUE(m.extra(i, j));
                }
            }
        }
    }
}

TEST(Masks, PrefixIndependentOfLaterSegments) {
    auto a = segment({5, 6, 7, 8, 9, 10}, SegmentPolicy::fixed(2));
    auto b = segment({5, 6, 7, 8, 11, 12, 13, 14}, SegmentPolicy::fixed(2));
    auto ma = build_masks(a), mb = build_masks(b);
    const std::size_t prefix = a.sep_positions[1] + 1;
    for (std::size_t i = 0; i < prefix; ++i)
        for (std::size_t j = 0; j < prefix; ++j) EXPECT_EQ(ma.extra(i, j), mb.extra(i, j));
}
