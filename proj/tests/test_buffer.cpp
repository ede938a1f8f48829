#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cba/buffer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace cba;

namespace {

BufferEntry entry(long idx, int y = 0, int d = 2) {
  BufferEntry e;
  e.x = Eigen::VectorXd::Constant(d, static_cast<double>(idx));
  e.y = y;
  e.stream_index = idx;
  return e;
}

std::vector<BufferEntry> stream(long n, int classes = 1) {
  std::vector<BufferEntry> v;
  for (long i = 0; i < n; ++i) v.push_back(entry(i, static_cast<int>(i % classes)));
  return v;
}

}  // namespace

TEST_CASE("under capacity the buffer keeps everything") {
  MemoryBuffer buf(10);
  Rng rng(1);
  buf.reservoir_update(stream(7), rng);
  CHECK(buf.size() == 7);
  CHECK(buf.seen() == 7);
  std::set<long> idx;
  for (const auto& e : buf.entries()) idx.insert(e.stream_index);
  CHECK(idx.size() == 7);
}

TEST_CASE("zero capacity stays empty but counts offers") {
  MemoryBuffer buf(0);
  Rng rng(2);
  buf.reservoir_update(stream(5), rng);
  CHECK(buf.size() == 0);
  CHECK(buf.seen() == 5);
  BufferBatch b = buf.sample(3, rng);
  CHECK(b.empty());
}

TEST_CASE("length equals min(seen, M) at every step") {
  MemoryBuffer buf(8);
  Rng rng(3);
  for (long i = 0; i < 40; ++i) {
    buf.reservoir_update({entry(i)}, rng);
    CHECK(buf.size() == static_cast<int>(std::min<long>(i + 1, 8)));
    CHECK(buf.seen() == i + 1);
  }
}

// The reservoir property: after n offers each stream position is present
// with probability M/n. Monte Carlo with a 3-sigma binomial band.
TEST_CASE("inclusion frequency is uniform at M/n") {
  const int M = 8, n = 64, trials = 10000;
  std::vector<int> hits(n, 0);
  for (int t = 0; t < trials; ++t) {
    MemoryBuffer buf(M);
    Rng rng = make_rng(2, static_cast<std::uint64_t>(t));
    buf.reservoir_update(stream(n), rng);
    CHECK(buf.size() == M);
    for (const auto& e : buf.entries()) hits[static_cast<std::size_t>(e.stream_index)]++;
  }
  const double p = static_cast<double>(M) / n;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  for (int i = 0; i < n; ++i) {
    double freq = static_cast<double>(hits[static_cast<std::size_t>(i)]) / trials;
    CHECK(std::abs(freq - p) <= 3 * sigma);
  }
}

TEST_CASE("sampling the whole buffer returns a permutation") {
  MemoryBuffer buf(5);
  Rng rng(7);
  buf.reservoir_update(stream(3), rng);
  BufferBatch b = buf.sample(3, rng);
  CHECK(b.size() == 3);
  std::set<long> got;
  for (int i = 0; i < 3; ++i) {
    // recover stream indices from the constant feature value
    got.insert(static_cast<long>(b.X(i, 0)));
  }
  CHECK(got == std::set<long>{0, 1, 2});
}

TEST_CASE("oversized requests return the whole buffer") {
  MemoryBuffer buf(5);
  Rng rng(8);
  buf.reservoir_update(stream(4), rng);
  BufferBatch b = buf.sample(10, rng);
  CHECK(b.size() == 4);
}

TEST_CASE("empty buffer yields a flagged empty batch") {
  MemoryBuffer buf(5);
  Rng rng(9);
  BufferBatch b = buf.sample(2, rng);
  CHECK(b.empty());
  CHECK(b.y.empty());
}

TEST_CASE("single draws are uniform over the buffer") {
  MemoryBuffer buf(4);
  Rng fill(10);
  buf.reservoir_update(stream(4), fill);
  const int draws = 10000;
  std::vector<int> hits(4, 0);
  Rng rng(11);
  for (int t = 0; t < draws; ++t) {
    BufferBatch b = buf.sample(1, rng);
    hits[static_cast<std::size_t>(b.X(0, 0))]++;
  }
  const double p = 0.25, sigma = std::sqrt(p * (1 - p) / draws);
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(static_cast<double>(hits[static_cast<std::size_t>(i)]) / draws - p) <= 3 * sigma);
}

TEST_CASE("sampling is without replacement") {
  MemoryBuffer buf(6);
  Rng fill(12);
  buf.reservoir_update(stream(6), fill);
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    BufferBatch b = buf.sample(4, rng);
    std::set<long> seen;
    for (int i = 0; i < 4; ++i) seen.insert(static_cast<long>(b.X(i, 0)));
    CHECK(seen.size() == 4);
  }
}

TEST_CASE("label histogram sums to the buffer length") {
  MemoryBuffer buf(10);
  Rng rng(14);
  buf.reservoir_update(stream(4, 1), rng);  // all class 0
  std::vector<BufferEntry> extra;
  for (long i = 4; i < 8; ++i) extra.push_back(entry(i, 2));
  buf.reservoir_update(extra, rng);
  auto hist = buf.label_histogram(3);
  CHECK(hist[0] == 4);
  CHECK(hist[1] == 0);
  CHECK(hist[2] == 4);

  MemoryBuffer empty(5);
  auto zeros = empty.label_histogram(3);
  CHECK(std::all_of(zeros.begin(), zeros.end(), [](long c) { return c == 0; }));
}

TEST_CASE("a long uniform stream keeps classes balanced in the buffer") {
  // 5 classes x 1000 examples into M=500; per-class expectation 100 with a
  // hypergeometric-like spread. Averaged over trials the band is tight.
  const int trials = 200;
  std::vector<double> sums(5, 0.0);
  for (int t = 0; t < trials; ++t) {
    MemoryBuffer buf(500);
    Rng rng(static_cast<std::uint64_t>(t) + 100);
    buf.reservoir_update(stream(5000, 5), rng);
    auto hist = buf.label_histogram(5);
    for (int c = 0; c < 5; ++c) sums[static_cast<std::size_t>(c)] += static_cast<double>(hist[static_cast<std::size_t>(c)]);
  }
  // variance of one class count is near hypergeometric: n p (1-p) (N-n)/(N-1)
  const double var1 = 500 * 0.2 * 0.8 * (4500.0 / 4999.0);
  const double sigma = std::sqrt(var1 / trials);
  for (int c = 0; c < 5; ++c) CHECK(std::abs(sums[static_cast<std::size_t>(c)] / trials - 100.0) <= 3 * sigma);
}

TEST_CASE("same seed and stream give identical buffers") {
  MemoryBuffer a(8), b(8);
  Rng r1(42), r2(42);
  a.reservoir_update(stream(50), r1);
  b.reservoir_update(stream(50), r2);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i)
    CHECK(a.entries()[static_cast<std::size_t>(i)].stream_index ==
          b.entries()[static_cast<std::size_t>(i)].stream_index);
}

TEST_CASE("stored logits survive insertion and sampling") {
  MemoryBuffer buf(4);
  Rng rng(15);
  BufferEntry e = entry(0, 1, 3);
  e.logits = Eigen::VectorXd::LinSpaced(4, 0.0, 3.0);
  buf.reservoir_update({e}, rng);
  BufferBatch b = buf.sample(1, rng);
  REQUIRE(b.has_logits);
  CHECK(b.logits(0, 3) == 3.0);
}
