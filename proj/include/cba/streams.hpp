#pragma once

#include "cba/autodiff.hpp"
#include "cba/rng.hpp"

#include <string>
#include <vector>

namespace cba {

struct Dataset {
  Matrix X;            // n x d
  std::vector<int> y;  // labels in [0, C)
  int class_count = 0;
  std::string name;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

struct Task {
  Dataset train;
  Dataset test;
  std::vector<int> classes;  // nominal class set
};

enum class StreamMode { Disjoint, Blurry };

struct TaskStream {
  std::vector<Task> tasks;
  StreamMode mode = StreamMode::Disjoint;
  int blurry_k = 0;
  int epochs_per_task = 1;  // 1 = online single-pass
  int class_count = 0;
};

// Class c is centered at separation * u_c with isotropic noise of stddev
// spread. Directions are mutually orthogonal basis vectors when C <= d,
// otherwise evenly spaced on the unit circle of the first two coordinates.
Dataset gen_gaussian_mixture(int C, int d, int n_per_class, double separation,
                             double spread, std::uint64_t seed);

// Classes partitioned into T consecutive groups of C/T; per-class train/test
// split by test_fraction.
TaskStream split_disjoint(const Dataset& ds, int T, double test_fraction,
                          std::uint64_t seed);

// Starts from split_disjoint, then exchanges K% of each task's training
// examples with other tasks (sizes conserved, so each task's out-of-class
// fraction stays <= K%). Test sets remain class-pure.
TaskStream split_blurry(const Dataset& ds, int T, int K, double test_fraction,
                        std::uint64_t seed);

TaskStream permute_task_order(const TaskStream& stream, const std::vector<int>& perm);

struct StreamBatch {
  int task = 0;
  Matrix x;
  std::vector<int> y;
  std::vector<long> stream_index;  // global position of each example
  bool task_end = false;           // last batch of its task
};

// Pre-materialized single-pass (or multi-epoch) batch schedule: per task and
// epoch a fresh shuffle, consecutive batches, no access across tasks.
std::vector<StreamBatch> online_iterator(const TaskStream& stream, int batch_size,
                                         std::uint64_t seed);

// CSV: "#cba-dataset,C=<int>,d=<int>" header, then "label,f0,...,f{d-1}".
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

}  // namespace cba
