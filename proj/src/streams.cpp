#include "cba/streams.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cba {

namespace {

struct Row {
  Eigen::VectorXd x;
  int y;
};

Dataset from_rows(const std::vector<Row>& rows, int C, const std::string& name) {
  Dataset ds;
  ds.class_count = C;
  ds.name = name;
  if (rows.empty()) return ds;
  ds.X.resize(static_cast<Eigen::Index>(rows.size()), rows.front().x.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.X.row(static_cast<Eigen::Index>(i)) = rows[i].x.transpose();
    ds.y.push_back(rows[i].y);
  }
  return ds;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

Dataset gen_gaussian_mixture(int C, int d, int n_per_class, double separation,
                             double spread, std::uint64_t seed) {
  if (C < 2 || d < 2)
    throw std::invalid_argument("gen_gaussian_mixture: need C >= 2 and d >= 2");
  if (n_per_class < 1)
    throw std::invalid_argument("gen_gaussian_mixture: need n_per_class >= 1");

  Rng rng(derive_seed(seed, 0));
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.class_count = C;
  ds.name = "synthetic";
  ds.X.resize(static_cast<Eigen::Index>(C) * n_per_class, d);
  for (int c = 0; c < C; ++c) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
    if (C <= d) {
      center(c) = separation;
    } else {
      const double angle = 2.0 * M_PI * c / C;
      center(0) = separation * std::cos(angle);
      center(1) = separation * std::sin(angle);
    }
    for (int i = 0; i < n_per_class; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(c) * n_per_class + i;
      for (int j = 0; j < d; ++j) ds.X(row, j) = center(j) + spread * noise(rng);
      ds.y.push_back(c);
    }
  }
  return ds;
}

TaskStream split_disjoint(const Dataset& ds, int T, double test_fraction,
                          std::uint64_t seed) {
  const int C = ds.class_count;
  if (T < 1 || C % T != 0)
    throw std::invalid_argument("split_disjoint: class count " + std::to_string(C) +
                                " not divisible by T=" + std::to_string(T) +
                                "; pick T dividing C");
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split_disjoint: test_fraction out of [0,1)");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(C));
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])].push_back(
        static_cast<int>(i));

  Rng rng(derive_seed(seed, 1));
  TaskStream stream;
  stream.class_count = C;
  const int per_task = C / T;
  for (int t = 0; t < T; ++t) {
    Task task;
    std::vector<Row> train_rows, test_rows;
    for (int k = 0; k < per_task; ++k) {
      const int c = t * per_task + k;
      task.classes.push_back(c);
      std::vector<int> idx = by_class[static_cast<std::size_t>(c)];
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n_test = static_cast<std::size_t>(
          std::floor(test_fraction * static_cast<double>(idx.size())));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        Row row{ds.X.row(idx[i]).transpose(), c};
        (i < n_test ? test_rows : train_rows).push_back(std::move(row));
      }
    }
    task.train = from_rows(train_rows, C, ds.name + "/train" + std::to_string(t));
    task.test = from_rows(test_rows, C, ds.name + "/test" + std::to_string(t));
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

TaskStream split_blurry(const Dataset& ds, int T, int K, double test_fraction,
                        std::uint64_t seed) {
  if (K < 0 || K >= 100)
    throw std::invalid_argument("split_blurry: K=" + std::to_string(K) +
                                " out of [0, 100)");
  TaskStream stream = split_disjoint(ds, T, test_fraction, seed);
  stream.mode = StreamMode::Blurry;
  stream.blurry_k = K;
  if (K == 0 || T < 2) return stream;

  Rng rng(derive_seed(seed, 2));
  std::vector<std::vector<Row>> rows(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const Dataset& tr = stream.tasks[static_cast<std::size_t>(t)].train;
    for (Eigen::Index i = 0; i < tr.size(); ++i)
      rows[static_cast<std::size_t>(t)].push_back(
          {tr.X.row(i).transpose(), tr.y[static_cast<std::size_t>(i)]});
  }

  // Each task donates floor(K% * n_t) examples; donated examples are then
  // reassigned by a within-list rotation, so per-task sizes are conserved and
  // each task receives exactly as many foreign examples as it gave away.
  struct Donation {
    int donor;
    Row row;
  };
  std::vector<Donation> donated;
  for (int t = 0; t < T; ++t) {
    auto& pool = rows[static_cast<std::size_t>(t)];
    const auto k = static_cast<std::size_t>(K * pool.size() / 100);
    std::vector<int> idx = shuffled_indices(static_cast<int>(pool.size()), rng);
    std::set<int, std::greater<>> chosen(idx.begin(), idx.begin() + static_cast<long>(k));
    for (int i : chosen) {  // descending: safe swap-and-pop
      donated.push_back({t, std::move(pool[static_cast<std::size_t>(i)])});
      pool[static_cast<std::size_t>(i)] = std::move(pool.back());
      pool.pop_back();
    }
  }
  std::shuffle(donated.begin(), donated.end(), rng);
  std::vector<int> target(donated.size());
  for (std::size_t i = 0; i < donated.size(); ++i)
    target[i] = donated[(i + 1) % donated.size()].donor;
  for (std::size_t i = 0; i < donated.size(); ++i) {
    if (target[i] != donated[i].donor) continue;
    for (std::size_t j = 0; j < donated.size(); ++j)
      if (target[j] != donated[i].donor && donated[j].donor != target[i]) {
        std::swap(target[i], target[j]);
        break;
      }
  }
  for (std::size_t i = 0; i < donated.size(); ++i)
    rows[static_cast<std::size_t>(target[i])].push_back(std::move(donated[i].row));

  for (int t = 0; t < T; ++t)
    stream.tasks[static_cast<std::size_t>(t)].train = from_rows(
        rows[static_cast<std::size_t>(t)], ds.class_count,
        ds.name + "/train" + std::to_string(t));
  return stream;
}

TaskStream permute_task_order(const TaskStream& stream, const std::vector<int>& perm) {
  const auto T = stream.tasks.size();
  if (perm.size() != T)
    throw std::invalid_argument("permute_task_order: permutation length mismatch");
  std::vector<bool> hit(T, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= T || hit[static_cast<std::size_t>(p)])
      throw std::invalid_argument("permute_task_order: not a permutation");
    hit[static_cast<std::size_t>(p)] = true;
  }
  TaskStream out = stream;
  for (std::size_t i = 0; i < T; ++i)
    out.tasks[i] = stream.tasks[static_cast<std::size_t>(perm[i])];
  return out;
}

std::vector<StreamBatch> online_iterator(const TaskStream& stream, int batch_size,
                                         std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("online_iterator: batch_size < 1");
  std::vector<StreamBatch> schedule;
  long stream_index = 0;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const Dataset& train = stream.tasks[t].train;
    const int n = static_cast<int>(train.size());
    for (int epoch = 0; epoch < stream.epochs_per_task; ++epoch) {
      Rng rng(derive_seed(seed, t, static_cast<std::uint64_t>(epoch)));
      std::vector<int> order = shuffled_indices(n, rng);
      for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(start + batch_size, n);
        StreamBatch b;
        b.task = static_cast<int>(t);
        b.x.resize(end - start, train.dim());
        for (int i = start; i < end; ++i) {
          const int src = order[static_cast<std::size_t>(i)];
          b.x.row(i - start) = train.X.row(src);
          b.y.push_back(train.y[static_cast<std::size_t>(src)]);
          b.stream_index.push_back(stream_index++);
        }
        b.task_end = (end == n && epoch == stream.epochs_per_task - 1);
        schedule.push_back(std::move(b));
      }
    }
  }
  return schedule;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("load_dataset: empty file " + path);
  int C = 0, d = 0;
  if (std::sscanf(line.c_str(), "#cba-dataset,C=%d,d=%d", &C, &d) != 2 || C < 1 || d < 1)
    throw std::runtime_error("load_dataset: bad header at line 1: " + line);

  std::vector<Row> rows;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t pos = 0;
        vals.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::runtime_error("load_dataset: malformed value '" + tok +
                                 "' at line " + std::to_string(line_no));
      }
    }
    if (static_cast<int>(vals.size()) != d + 1)
      throw std::runtime_error("load_dataset: expected " + std::to_string(d + 1) +
                               " fields, got " + std::to_string(vals.size()) +
                               " at line " + std::to_string(line_no));
    const int y = static_cast<int>(vals[0]);
    if (static_cast<double>(y) != vals[0] || y < 0 || y >= C)
      throw std::runtime_error("load_dataset: label " + std::to_string(vals[0]) +
                               " out of [0," + std::to_string(C) + ") at line " +
                               std::to_string(line_no));
    Row r;
    r.y = y;
    r.x.resize(d);
    for (int j = 0; j < d; ++j) r.x(j) = vals[static_cast<std::size_t>(j) + 1];
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("load_dataset: no rows in " + path);
  Dataset ds = from_rows(rows, C, path);
  std::vector<bool> present(static_cast<std::size_t>(C), false);
  for (int y : ds.y) present[static_cast<std::size_t>(y)] = true;
  for (int c = 0; c < C; ++c)
    if (!present[static_cast<std::size_t>(c)])
      throw std::runtime_error("load_dataset: class " + std::to_string(c) +
                               " has no examples in " + path);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
  os << "#cba-dataset,C=" << ds.class_count << ",d=" << ds.dim() << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    os << ds.y[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.X(i, j));
      os << "," << buf;
    }
    os << "\n";
  }
}

}  // namespace cba
