#pragma once

#include "cba/autodiff.hpp"
#include "cba/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cba {

struct BufferEntry {
  Eigen::VectorXd x;
  int y = 0;
  std::optional<Eigen::VectorXd> logits;  // snapshot at insertion, never refreshed
  long stream_index = 0;
};

struct BufferBatch {
  Matrix X;            // b x d
  std::vector<int> y;
  Matrix logits;       // b x C, zero rows when entries carried none
  bool has_logits = false;

  bool empty() const { return y.empty(); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(y.size()); }
};

// Fixed-capacity reservoir sample of the stream: length = min(seen, M).
class MemoryBuffer {
 public:
  explicit MemoryBuffer(int capacity);

  // Classical reservoir sampling, one offer per entry: while under capacity
  // store directly, afterwards replace a uniform slot with probability M/i
  // (i the 1-based global offer index).
  void reservoir_update(const std::vector<BufferEntry>& batch, Rng& rng);

  // b entries uniformly without replacement; oversized requests return the
  // whole buffer. An empty buffer yields an empty (flagged) batch.
  BufferBatch sample(int b, Rng& rng) const;

  std::vector<long> label_histogram(int class_count) const;

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  long seen() const { return seen_; }
  const std::vector<BufferEntry>& entries() const { return entries_; }

  // Debug dump: stream_index, y, x0..x{d-1} (logits omitted).
  void dump_csv(const std::string& path) const;

 private:
  int capacity_;
  long seen_ = 0;
  std::vector<BufferEntry> entries_;
};

}  // namespace cba
