#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "fixtures.hpp"

using namespace conttune;

namespace {

ErrorCode code_of(const std::string& text) {
  try {
    parse_trace(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return ErrorCode::ConfigError;
}

}  // namespace

TEST(Permutation, ReplicatesTheSameOrder) {
  const auto t = synthetic_permutation({{"s", 100000}}, 10, 2, 7);
  ASSERT_EQ(t.epochs.size(), 20u);
  std::vector<int> first;
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(t.epochs[i], t.epochs[i + 10]);
    first.push_back(t.epochs[i].multiplier);
  }
  std::sort(first.begin(), first.end());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(first[i], i + 1);
  EXPECT_DOUBLE_EQ(t.total_duration(), 20 * 600.0);
}

TEST(Permutation, RatesScaleTheUnit) {
  const auto t = synthetic_permutation({{"s", 100000}}, 10, 1, 3);
  for (const auto& e : t.epochs) {
    EXPECT_DOUBLE_EQ(e.rates.at("s"), 100000.0 * e.multiplier);
    if (e.multiplier == 9) {
      EXPECT_DOUBLE_EQ(e.rates.at("s"), 900000.0);
    }
  }
}

TEST(Permutation, SeedDeterminism) {
  EXPECT_EQ(seeded_permutation(50, 11), seeded_permutation(50, 11));
  EXPECT_NE(seeded_permutation(50, 11), seeded_permutation(50, 12));
  EXPECT_EQ(seeded_permutation(1, 5), (std::vector<int>{1}));
}

TEST(Permutation, RejectsBadParameters) {
  EXPECT_THROW(synthetic_permutation({{"s", 1}}, 0, 1, 1), Error);
  EXPECT_THROW(synthetic_permutation({{"s", 1}}, 3, 0, 1), Error);
  EXPECT_THROW(synthetic_permutation({{"s", -1}}, 3, 1, 1), Error);
}

TEST(Trace, ThreeRowFile) {
  const auto t = parse_trace("t_start_s,source_id,rate\n0,s,100\n600,s,200\n1200,s,300\n");
  ASSERT_EQ(t.epochs.size(), 3u);
  EXPECT_DOUBLE_EQ(t.epochs[1].rates.at("s"), 200.0);
  EXPECT_DOUBLE_EQ(t.epochs[1].duration_s, 600.0);
  EXPECT_DOUBLE_EQ(t.epochs[2].duration_s, 600.0);
}

TEST(Trace, Errors) {
  EXPECT_EQ(code_of("t_start_s,source_id,rate,duration_s\n0,s,1,600\n700,s,1,600\n"),
            ErrorCode::NonContiguousTrace);
  EXPECT_EQ(code_of("0,s,100\n600,s,-5\n"), ErrorCode::NegativeRate);
  EXPECT_EQ(code_of("600,s,1\n0,s,1\n"), ErrorCode::NonContiguousTrace);
  EXPECT_EQ(code_of("0,s,x\n"), ErrorCode::InvalidTrace);
  EXPECT_EQ(code_of("0,a,1\n0,b,1\n600,a,1\n"), ErrorCode::InvalidTrace);
  EXPECT_EQ(code_of(""), ErrorCode::InvalidTrace);
}

TEST(Trace, WriteParseRoundTrip) {
  auto t = synthetic_permutation({{"a", 1234.5}, {"b", 0.1}}, 6, 2, 9, 300);
  std::ostringstream out;
  write_trace(out, t);
  const auto back = parse_trace(out.str());
  ASSERT_EQ(back.epochs.size(), t.epochs.size());
  for (std::size_t i = 0; i < t.epochs.size(); ++i) {
    EXPECT_EQ(back.epochs[i].rates, t.epochs[i].rates);
    EXPECT_EQ(back.epochs[i].duration_s, t.epochs[i].duration_s);
  }
}
