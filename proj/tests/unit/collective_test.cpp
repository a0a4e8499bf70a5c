#include <gtest/gtest.h>

#include <random>

#include "lasgd/collective.hpp"
#include "../support/reference.hpp"

using namespace lasgd;

namespace {

std::vector<ParamVector> random_inputs(std::mt19937_64& rng, std::size_t P, std::size_t d) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<ParamVector> xs;
  for (std::size_t r = 0; r < P; ++r) {
    ParamVector v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = u(rng);
    xs.push_back(std::move(v));
  }
  return xs;
}

std::vector<ref::Vec> raw(const std::vector<ParamVector>& xs) {
  std::vector<ref::Vec> out;
  for (const auto& x : xs) out.push_back(x.raw());
  return out;
}

}  // namespace

TEST(RingSchedule, StepCounts) {
  EXPECT_EQ(ring_schedule(1).num_steps(), 0u);
  EXPECT_EQ(ring_schedule(2).num_steps(), 2u);
  EXPECT_EQ(ring_schedule(3).num_steps(), 4u);
  const RingSchedule s = ring_schedule(3);
  EXPECT_TRUE(s.is_reduce_scatter(0));
  EXPECT_TRUE(s.is_reduce_scatter(1));
  EXPECT_FALSE(s.is_reduce_scatter(2));
}

TEST(RingSchedule, EachRankSendsToSuccessorAndStepsMatchUp) {
  for (std::size_t P : {2, 3, 4, 7}) {
    const RingSchedule s = ring_schedule(P);
    for (std::size_t step = 0; step < s.num_steps(); ++step) {
      for (std::size_t r = 0; r < P; ++r) {
        const RingStep& st = s.step(r, step);
        EXPECT_EQ(st.send_to, (r + 1) % P);
        EXPECT_EQ(st.recv_from, (r + P - 1) % P);
        // What r receives is what its predecessor sends.
        EXPECT_EQ(st.recv_chunk, s.step(st.recv_from, step).send_chunk);
      }
    }
  }
}

// Replays the schedule on sets of contributor ids: after reduce-scatter rank r
// owns chunk r summed over everyone, after all-gather every rank holds all.
TEST(RingSchedule, SymbolicReplayReducesEveryChunk) {
  for (std::size_t P : {2, 3, 4, 5, 8}) {
    const RingSchedule s = ring_schedule(P);
    std::vector<std::vector<std::uint64_t>> held(P, std::vector<std::uint64_t>(P));
    for (std::size_t r = 0; r < P; ++r) {
      for (std::size_t c = 0; c < P; ++c) held[r][c] = std::uint64_t{1} << r;
    }
    const std::uint64_t all = (std::uint64_t{1} << P) - 1;
    for (std::size_t step = 0; step < s.num_steps(); ++step) {
      auto next = held;
      for (std::size_t r = 0; r < P; ++r) {
        const RingStep& st = s.step(r, step);
        const std::uint64_t incoming = held[st.recv_from][st.recv_chunk];
        if (s.is_reduce_scatter(step)) {
          ASSERT_EQ(held[r][st.recv_chunk] & incoming, 0u) << "contribution counted twice";
          next[r][st.recv_chunk] = held[r][st.recv_chunk] | incoming;
        } else {
          next[r][st.recv_chunk] = incoming;
        }
      }
      held = std::move(next);
      if (step == P - 2) {
        for (std::size_t r = 0; r < P; ++r) EXPECT_EQ(held[r][r], all) << "P=" << P << " rank " << r;
      }
    }
    for (std::size_t r = 0; r < P; ++r) {
      for (std::size_t c = 0; c < P; ++c) EXPECT_EQ(held[r][c], all);
    }
  }
}

TEST(AllReduce, SmallExample) {
  CountingTransport t(3);
  const std::vector<ParamVector> xs{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const CollectiveHandle h = all_reduce_average(xs, t);
  ASSERT_EQ(h.status(), CollectiveStatus::Complete);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(h.result(r), (ParamVector{4, 5, 6}));
}

TEST(AllReduce, SingleRankIsIdentity) {
  CountingTransport t(1);
  const std::vector<ParamVector> xs{{0.1, -7.25, 3e100}};
  const CollectiveHandle h = all_reduce_average(xs, t);
  ASSERT_EQ(h.status(), CollectiveStatus::Complete);
  EXPECT_EQ(h.result(0), xs[0]);
  EXPECT_EQ(h.bytes_sent(0), 0u);
}

TEST(AllReduce, MatchesNaiveMeanAndRingOrderExactly) {
  std::mt19937_64 rng(99);
  for (std::size_t P : {2, 3, 4, 8, 16}) {
    for (std::size_t d : {1, 5, 1000}) {
      const auto xs = random_inputs(rng, P, d);
      CountingTransport t(P);
      const CollectiveHandle h = all_reduce_average(xs, t);
      ASSERT_EQ(h.status(), CollectiveStatus::Complete);
      EXPECT_LE(ref::max_rel_err(h.result(0).raw(), ref::naive_mean(raw(xs))), 1e-12);
      EXPECT_EQ(h.result(0).raw(), ref::ring_order_mean(raw(xs)));
      for (std::size_t r = 1; r < P; ++r) EXPECT_EQ(h.result(r), h.result(0));
    }
  }
}

TEST(AllReduce, Deterministic) {
  std::mt19937_64 rng(1);
  const auto xs = random_inputs(rng, 6, 77);
  CountingTransport t1(6), t2(6);
  EXPECT_EQ(all_reduce_average(xs, t1).result(3), all_reduce_average(xs, t2).result(3));
}

TEST(AllReduce, ByteCountersMatchScheduleAndPeakIsLargestChunk) {
  std::mt19937_64 rng(2);
  for (std::size_t P : {2, 3, 4, 8}) {
    for (std::size_t d : {3, 10, 100, 1001}) {
      const auto xs = random_inputs(rng, P, d);
      CountingTransport t(P);
      const CollectiveHandle h = all_reduce_average(xs, t);
      std::uint64_t worst = 0;
      for (std::size_t r = 0; r < P; ++r) {
        EXPECT_EQ(t.bytes_sent(r), ref::ring_bytes(r, d, P, 8));
        EXPECT_EQ(h.bytes_sent(r), t.bytes_sent(r));
        EXPECT_EQ(bytes_per_rank(d, P, 8, r), t.bytes_sent(r));
        EXPECT_EQ(t.peak_payload_bytes(r), (d + P - 1) / P * 8);
        worst = std::max(worst, t.bytes_sent(r));
      }
      EXPECT_EQ(bytes_per_node(d, P, 8), worst);
      EXPECT_EQ(t.messages(), P * 2 * (P - 1));
    }
  }
}

TEST(Bytes, ClosedFormExamples) {
  EXPECT_EQ(bytes_per_node(100, 1, 8), 0u);
  EXPECT_EQ(bytes_per_node(100, 4, 8), 1200u);
  const std::size_t hundred_mb = 100'000'000;
  EXPECT_EQ(per_step_payload_bytes(hundred_mb, 4, 1), 25'000'000u);
  EXPECT_EQ(per_step_payload_bytes(10, 3, 8), 32u);
}

TEST(AllReduce, FaultMarksHandleFailed) {
  std::mt19937_64 rng(3);
  const auto xs = random_inputs(rng, 4, 12);
  CountingTransport t(4);
  t.inject_fault_after(5, "link down");
  const CollectiveHandle h = all_reduce_average(xs, t);
  EXPECT_EQ(poll(h), CollectiveStatus::Failed);
  EXPECT_NE(h.failure_reason().find("link down"), std::string::npos);
  EXPECT_THROW(h.result(0), std::logic_error);
}

TEST(AllReduce, DimensionMismatchFailsTheCollective) {
  RingAllReduce ar(0, 2, 3);
  ar.contribute(0, {1, 2, 3});
  ar.contribute(1, {1, 2});
  EXPECT_EQ(ar.handle().status(), CollectiveStatus::Failed);
  EXPECT_TRUE(ar.finished());
}

TEST(RingAllReduce, InFlightUntilAllStepsRun) {
  RingAllReduce ar(7, 3, 6);
  const CollectiveHandle h = ar.handle();
  EXPECT_EQ(poll(h), CollectiveStatus::InFlight);
  ar.contribute(0, {1, 1, 1, 1, 1, 1});
  ar.contribute(2, {3, 3, 3, 3, 3, 3});
  EXPECT_FALSE(ar.ready());
  EXPECT_TRUE(ar.has_contribution(2));
  EXPECT_FALSE(ar.has_contribution(1));
  ar.contribute(1, {2, 2, 2, 2, 2, 2});
  ASSERT_TRUE(ar.ready());
  CountingTransport t(3);
  for (std::size_t s = 0; s < ar.num_steps(); ++s) {
    EXPECT_EQ(poll(h), CollectiveStatus::InFlight);
    ar.advance(t);
    EXPECT_EQ(ar.steps_done(), s + 1);
  }
  ar.advance(t);
  ASSERT_EQ(poll(h), CollectiveStatus::Complete);
  EXPECT_EQ(h.round(), 7u);
  EXPECT_EQ(h.result(1), ParamVector(6, 2.0));
}

TEST(CollectiveHandle, StatusIsFinalOnceResolved) {
  CollectiveHandle h(1, 2);
  h.fail("first");
  EXPECT_EQ(h.status(), CollectiveStatus::Failed);
  EXPECT_THROW(h.complete({ParamVector{1}, ParamVector{1}}, {0, 0}), std::logic_error);
  EXPECT_EQ(h.status(), CollectiveStatus::Failed);
  EXPECT_EQ(h.failure_reason(), "first");
}
