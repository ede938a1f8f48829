#include "cba/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace cba {

double task_accuracy(const ParamSet& params, const Dataset& test) {
  if (test.size() == 0) throw std::invalid_argument("task_accuracy: empty test set");
  std::vector<int> pred = predict(params, test.X);
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test.y[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

void evaluate_model(const ParamSet& params, const TaskStream& stream, int upto_task,
                    AccuracyMatrix& matrix) {
  if (upto_task < 0 || upto_task >= matrix.tasks())
    throw std::invalid_argument("evaluate_model: task index out of range");
  for (int i = 0; i <= upto_task; ++i)
    matrix.a(i, upto_task) =
        task_accuracy(params, stream.tasks[static_cast<std::size_t>(i)].test);
}

double compute_ACC(const AccuracyMatrix& matrix) {
  const int T = matrix.tasks();
  if (T == 0) throw std::invalid_argument("compute_ACC: empty matrix");
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    if (!matrix.is_set(t, T - 1))
      throw std::invalid_argument("compute_ACC: final column entry " +
                                  std::to_string(t) + " unset");
    total += matrix.a(t, T - 1);
  }
  return total / T;
}

double compute_FM(const AccuracyMatrix& matrix) {
  const int T = matrix.tasks();
  if (T == 0) throw std::invalid_argument("compute_FM: empty matrix");
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = t; j < T; ++j) {
      if (!matrix.is_set(t, j))
        throw std::invalid_argument("compute_FM: entry (" + std::to_string(t) + "," +
                                    std::to_string(j) + ") unset");
      best = std::max(best, matrix.a(t, j));
    }
    total += best - matrix.a(t, T - 1);
  }
  return total / T;
}

AccAuc compute_ACC_AUC(const std::vector<TracePoint>& trace, int delta_n) {
  if (trace.empty()) throw std::invalid_argument("compute_ACC_AUC: empty trace");
  if (delta_n < 1) throw std::invalid_argument("compute_ACC_AUC: delta_n < 1");
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].step - trace[i - 1].step != delta_n)
      throw std::invalid_argument("compute_ACC_AUC: irregular spacing at index " +
                                  std::to_string(i));
  AccAuc out;
  for (const TracePoint& p : trace) out.raw += p.avg_acc * delta_n;
  out.normalized = out.raw / (static_cast<double>(trace.size()) * delta_n);
  return out;
}

ConfusionReport confusion_and_task_distribution(const ParamSet& params,
                                                const TaskStream& stream) {
  const int C = stream.class_count;
  ConfusionReport rep;
  rep.confusion = Matrix::Zero(C, C);
  rep.task_mass.assign(stream.tasks.size(), 0.0);

  std::vector<int> class_to_task(static_cast<std::size_t>(C), -1);
  for (std::size_t t = 0; t < stream.tasks.size(); ++t)
    for (int c : stream.tasks[t].classes)
      class_to_task[static_cast<std::size_t>(c)] = static_cast<int>(t);

  long total = 0;
  for (const Task& task : stream.tasks) {
    std::vector<int> pred = predict(params, task.test.X);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      rep.confusion(task.test.y[i], pred[i]) += 1.0;
      const int owner = class_to_task[static_cast<std::size_t>(pred[i])];
      if (owner >= 0) rep.task_mass[static_cast<std::size_t>(owner)] += 1.0;
      ++total;
    }
  }
  for (int r = 0; r < C; ++r) {
    const double row_total = rep.confusion.row(r).sum();
    if (row_total > 0.0) rep.confusion.row(r) /= row_total;
  }
  if (total > 0)
    for (double& m : rep.task_mass) m /= static_cast<double>(total);
  return rep;
}

}  // namespace cba
