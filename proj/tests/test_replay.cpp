#include <gtest/gtest.h>

#include <map>
#include <set>

#include "samcl/replay/memory_buffer.hpp"

using namespace samcl;

TEST(MemoryBuffer, FillsInInsertionOrderBelowCapacity) {
  MemoryBuffer<int> buffer(3, 1);
  buffer.insert(0);
  buffer.insert(1);
  buffer.insert(2);
  EXPECT_EQ(buffer.items(), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(buffer.seen(), 3u);
}

TEST(MemoryBuffer, ReservoirKeepsEachItemWithEqualProbability) {
  const int trials = 20000;
  std::map<int, int> kept;
  for (int t = 0; t < trials; ++t) {
    MemoryBuffer<int> buffer(10, derive_seed(77, std::uint64_t(t)));
    for (int i = 0; i < 50; ++i) buffer.insert(i);
    ASSERT_EQ(buffer.size(), 10u);
    for (int v : buffer.items()) ++kept[v];
  }
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(double(kept[i]) / trials, 0.2, 0.02) << "item " << i;
  }
}

TEST(MemoryBuffer, DeterministicForSeed) {
  MemoryBuffer<int> a(10, 5), b(10, 5);
  for (int i = 0; i < 50; ++i) {
    a.insert(i);
    b.insert(i);
  }
  EXPECT_EQ(a.items(), b.items());
  for (int r = 0; r < 5; ++r) {
    const auto sa = a.sample(4), sb = b.sample(4);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(*sa[k], *sb[k]);
  }
}

TEST(MemoryBuffer, SingleItemSampledWithReplacement) {
  MemoryBuffer<int> buffer(5, 3);
  buffer.insert(42);
  const auto s = buffer.sample(3);
  ASSERT_EQ(s.size(), 3u);
  for (const int* p : s) EXPECT_EQ(*p, 42);
}

TEST(MemoryBuffer, SampleWithoutReplacementHasDistinctSlots) {
  MemoryBuffer<int> buffer(10, 9);
  for (int i = 0; i < 10; ++i) buffer.insert(i);
  for (int r = 0; r < 100; ++r) {
    const auto s = buffer.sample(4);
    std::set<const int*> distinct(s.begin(), s.end());
    EXPECT_EQ(distinct.size(), 4u);
  }
}

TEST(MemoryBuffer, SampleIsUniformOverSlots) {
  MemoryBuffer<int> buffer(10, 21);
  for (int i = 0; i < 10; ++i) buffer.insert(i);
  std::map<int, int> hits;
  const int draws = 100000;
  for (int r = 0; r < draws; ++r) ++hits[*buffer.sample(1)[0]];
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(double(hits[i]) / draws, 0.1, 0.01);
}

TEST(MemoryBuffer, EmptySampleThrows) {
  MemoryBuffer<int> buffer(4, 1);
  EXPECT_THROW((void)buffer.sample(1), EmptyBufferError);
}

TEST(MemoryBuffer, SizeNeverExceedsCapacity) {
  MemoryBuffer<int> buffer(7, 2);
  for (int i = 0; i < 1000; ++i) {
    buffer.insert(i);
    EXPECT_LE(buffer.size(), 7u);
  }
  EXPECT_EQ(buffer.seen(), 1000u);
}

TEST(MemoryBuffer, RestoreContinuesIdentically) {
  MemoryBuffer<int> a(5, 11);
  for (int i = 0; i < 20; ++i) a.insert(i);
  auto b = MemoryBuffer<int>::restore(a.capacity(), a.items(), a.seen(), rng_from_state(rng_state(a.rng())));
  for (int i = 20; i < 40; ++i) {
    a.insert(i);
    b.insert(i);
  }
  EXPECT_EQ(a.items(), b.items());
  EXPECT_EQ(*a.sample(2)[1], *b.sample(2)[1]);
}
