#include "cba/buffer.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cba {

MemoryBuffer::MemoryBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 0) throw std::invalid_argument("MemoryBuffer: negative capacity");
}

void MemoryBuffer::reservoir_update(const std::vector<BufferEntry>& batch, Rng& rng) {
  for (const BufferEntry& e : batch) {
    ++seen_;
    if (capacity_ == 0) continue;
    if (static_cast<int>(entries_.size()) < capacity_) {
      entries_.push_back(e);
      continue;
    }
    std::uniform_int_distribution<long> dist(0, seen_ - 1);
    long j = dist(rng);
    if (j < capacity_) entries_[static_cast<std::size_t>(j)] = e;
  }
}

BufferBatch MemoryBuffer::sample(int b, Rng& rng) const {
  BufferBatch out;
  const int n = size();
  if (n == 0 || b <= 0) return out;
  const int k = std::min(b, n);

  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {  // partial Fisher-Yates
    std::uniform_int_distribution<int> dist(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(dist(rng))]);
  }

  const Eigen::Index d = entries_.front().x.size();
  Eigen::Index c = 0;
  for (const BufferEntry& e : entries_)
    if (e.logits) c = e.logits->size();
  out.X.resize(k, d);
  out.logits = Matrix::Zero(k, c);
  out.has_logits = c > 0;
  for (int i = 0; i < k; ++i) {
    const BufferEntry& e = entries_[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    out.X.row(i) = e.x.transpose();
    out.y.push_back(e.y);
    if (e.logits)
      out.logits.row(i) = e.logits->transpose();
    else
      out.has_logits = false;
  }
  return out;
}

std::vector<long> MemoryBuffer::label_histogram(int class_count) const {
  std::vector<long> counts(static_cast<std::size_t>(class_count), 0);
  for (const BufferEntry& e : entries_) {
    if (e.y < 0 || e.y >= class_count)
      throw std::out_of_range("label_histogram: label " + std::to_string(e.y));
    ++counts[static_cast<std::size_t>(e.y)];
  }
  return counts;
}

void MemoryBuffer::dump_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("dump_csv: cannot open " + path);
  os << "stream_index,y";
  const Eigen::Index d = entries_.empty() ? 0 : entries_.front().x.size();
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
  os << "\n";
  char buf[32];
  for (const BufferEntry& e : entries_) {
    os << e.stream_index << "," << e.y;
    for (Eigen::Index i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.x(i));
      os << "," << buf;
    }
    os << "\n";
  }
}

}  // namespace cba
