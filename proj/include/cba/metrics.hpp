#pragma once

#include "cba/bilevel.hpp"
#include "cba/streams.hpp"

namespace cba {

// a(i, j) = accuracy (percent) of task i's test set after finishing training
// task j; entries with i > j stay unset (NaN).
struct AccuracyMatrix {
  Matrix a;

  explicit AccuracyMatrix(int T = 0)
      : a(Matrix::Constant(T, T, std::numeric_limits<double>::quiet_NaN())) {}
  int tasks() const { return static_cast<int>(a.rows()); }
  bool is_set(int i, int j) const { return !std::isnan(a(i, j)); }
};

struct TracePoint {
  long step = 0;
  double avg_acc = 0.0;  // percent, over the seen tasks' test sets
};

// Class-incremental evaluation: predictions over the full class range, no
// task identity. Fills column j for i <= j.
void evaluate_model(const ParamSet& params, const TaskStream& stream, int upto_task,
                    AccuracyMatrix& matrix);

double task_accuracy(const ParamSet& params, const Dataset& test);

// ACC = mean of the final column.
double compute_ACC(const AccuracyMatrix& matrix);

// FM = mean over tasks of (best accuracy at or after learning the task minus
// final accuracy).
double compute_FM(const AccuracyMatrix& matrix);

struct AccAuc {
  double raw = 0.0;         // sum a(i*dn) * dn
  double normalized = 0.0;  // raw / (count * dn)
};
AccAuc compute_ACC_AUC(const std::vector<TracePoint>& trace, int delta_n);

struct ConfusionReport {
  Matrix confusion;               // C x C, row-normalized
  std::vector<double> task_mass;  // fraction of predictions per task class set
};
ConfusionReport confusion_and_task_distribution(const ParamSet& params,
                                                const TaskStream& stream);

}  // namespace cba
