#include <gtest/gtest.h>

#include <array>
#include <atomic>
#include <thread>

#include "softarm/concurrency.hpp"

using namespace softarm;

TEST(BoundedQueue, DropsOldestWhenFull) {
  BoundedQueue<int> q(3);
  for (int i = 0; i < 5; ++i) q.push(i);
  EXPECT_EQ(q.size(), 3u);
  EXPECT_EQ(q.dropped(), 2u);
  EXPECT_EQ(*q.try_pop(), 2);
  EXPECT_EQ(*q.try_pop(), 3);
  EXPECT_EQ(*q.try_pop(), 4);
  EXPECT_FALSE(q.try_pop().has_value());
}

TEST(BoundedQueue, PopDrainsThenReportsClose) {
  BoundedQueue<int> q(8);
  q.push(1);
  q.push(2);
  q.close();
  EXPECT_EQ(*q.pop(), 1);
  EXPECT_EQ(*q.pop(), 2);
  EXPECT_FALSE(q.pop().has_value());
}

TEST(BoundedQueue, ConsumerSeesOrderedSubsequence) {
  BoundedQueue<int> q(16);
  std::vector<int> got;
  std::thread consumer([&] {
    while (auto v = q.pop()) got.push_back(*v);
  });
  const int n = 100000;
  for (int i = 0; i < n; ++i) q.push(i);
  q.close();
  consumer.join();
  EXPECT_EQ(got.size() + q.dropped(), static_cast<std::size_t>(n));
  for (std::size_t i = 1; i < got.size(); ++i) ASSERT_LT(got[i - 1], got[i]);
  EXPECT_EQ(got.back(), n - 1);
}

TEST(SnapshotChannel, EmptyUntilFirstPublish) {
  SnapshotChannel<int> c;
  EXPECT_FALSE(c.latest().has_value());
  c.publish(4);
  const auto v = c.latest();
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->first, 4);
  EXPECT_EQ(v->second, 1u);
}

TEST(SnapshotChannel, ReadersNeverSeeTornValues) {
  // every element of a published array carries the same sequence tag
  SnapshotChannel<std::array<std::uint64_t, 64>> c;
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    for (std::uint64_t k = 1; k <= 20000; ++k) {
      std::array<std::uint64_t, 64> a;
      a.fill(k);
      c.publish(a);
    }
    stop = true;
    c.close();
  });
  std::uint64_t seen = 0;
  int reads = 0;
  while (auto v = c.wait_newer(seen)) {
    const auto& [a, seq] = *v;
    for (auto x : a) ASSERT_EQ(x, seq);
    ASSERT_GT(seq, seen);
    seen = seq;
    ++reads;
  }
  writer.join();
  EXPECT_TRUE(stop);
  EXPECT_GT(reads, 0);
  EXPECT_EQ(c.latest()->second, 20000u);
}

TEST(SnapshotChannel, CloseWakesWaiter) {
  SnapshotChannel<int> c;
  std::thread t([&] { EXPECT_FALSE(c.wait_newer(0).has_value()); });
  std::this_thread::sleep_for(std::chrono::milliseconds(10));
  c.close();
  t.join();
}
