#include "cba/runner.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace cba {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string method_name(const MethodConfig& m) {
  return m.method == Method::ER ? "er" : "derpp";
}

struct Stats {
  double mean = 0.0, sd = 0.0;
};

Stats mean_std(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace

TaskStream build_stream(const RunConfig& cfg, std::uint64_t seed) {
  Dataset ds;
  if (cfg.stream.dataset == "synthetic") {
    ds = gen_gaussian_mixture(cfg.stream.synth_classes, cfg.stream.synth_dim,
                              cfg.stream.synth_per_class, cfg.stream.synth_separation,
                              cfg.stream.synth_spread, derive_seed(seed, 4));
  } else {
    ds = load_dataset(cfg.stream.dataset);
  }
  const std::uint64_t split_seed = derive_seed(seed, 3);
  TaskStream stream =
      cfg.stream.mode == StreamMode::Blurry
          ? split_blurry(ds, cfg.stream.tasks, cfg.stream.blurry_k,
                         cfg.stream.test_fraction, split_seed)
          : split_disjoint(ds, cfg.stream.tasks, cfg.stream.test_fraction, split_seed);
  stream.epochs_per_task = cfg.stream.epochs_per_task;
  if (!cfg.stream.task_order.empty())
    stream = permute_task_order(stream, cfg.stream.task_order);
  return stream;
}

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed) {
  SeedResult result;
  result.seed = seed;
  try {
    TaskStream stream = build_stream(cfg, seed);
    const int T = static_cast<int>(stream.tasks.size());
    result.matrix = AccuracyMatrix(T);

    ModelSpec spec;
    spec.input_dim = static_cast<int>(stream.tasks.front().train.dim());
    spec.backbone_widths = cfg.backbone_widths;
    spec.class_count = stream.class_count;
    spec.cba_hidden = cfg.cba_hidden;
    spec.seed = derive_seed(seed, 0);

    BilevelState state;
    state.params = init_params(spec);
    state.alpha = cfg.method.alpha;
    state.beta = cfg.method.beta;

    MemoryBuffer buffer(cfg.buffer_capacity);
    const std::uint64_t buffer_seed = derive_seed(seed, 2);
    std::vector<StreamBatch> schedule =
        online_iterator(stream, cfg.stream.batch_size, derive_seed(seed, 1));

    long step = 0;
    for (const StreamBatch& sb : schedule) {
      NewBatch nb{sb.x, sb.y, sb.stream_index};
      if (cfg.inject_nan && cfg.inject_nan->first == seed &&
          cfg.inject_nan->second == step)
        nb.x(0, 0) = std::numeric_limits<double>::quiet_NaN();

      StepRngs rngs = make_step_rngs(buffer_seed, step);
      if (cfg.method.use_cba) {
        cba_train_step(state, nb, buffer, rngs, cfg.method, cfg.stream.batch_size,
                       cfg.diagnostics);
        if (state.last_diag) result.diags.push_back(*state.last_diag);
      } else {
        baseline_stream_step(state.params, nb, buffer, rngs, cfg.method,
                             cfg.stream.batch_size);
      }
      ++step;

      if (step % cfg.eval_interval == 0) {
        double acc_sum = 0.0;
        for (int t = 0; t <= sb.task; ++t)
          acc_sum += task_accuracy(state.params,
                                   stream.tasks[static_cast<std::size_t>(t)].test);
        result.trace.push_back({step, acc_sum / (sb.task + 1)});
      }
      if (sb.task_end) evaluate_model(state.params, stream, sb.task, result.matrix);
    }

    result.acc = compute_ACC(result.matrix);
    result.fm = compute_FM(result.matrix);
    AccAuc auc = compute_ACC_AUC(result.trace, cfg.eval_interval);
    result.auc_raw = auc.raw;
    result.auc_norm = auc.normalized;
  } catch (const std::exception& e) {
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

RunResult run_experiment(const RunConfig& cfg) {
  RunResult result;
  result.per_seed.resize(cfg.seeds.size());

  unsigned workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                     : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min(workers, static_cast<unsigned>(cfg.seeds.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      result.per_seed[i] = run_seed(cfg, cfg.seeds[i]);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<double> acc, fm, auc_raw, auc_norm;
  for (const SeedResult& s : result.per_seed) {
    if (s.failed) {
      ++result.failed_seeds;
      continue;
    }
    acc.push_back(s.acc);
    fm.push_back(s.fm);
    auc_raw.push_back(s.auc_raw);
    auc_norm.push_back(s.auc_norm);
  }
  Stats a = mean_std(acc), f = mean_std(fm), r = mean_std(auc_raw), n = mean_std(auc_norm);
  result.mean_acc = a.mean;
  result.std_acc = a.sd;
  result.mean_fm = f.mean;
  result.std_fm = f.sd;
  result.mean_auc_raw = r.mean;
  result.std_auc_raw = r.sd;
  result.mean_auc_norm = n.mean;
  result.std_auc_norm = n.sd;
  return result;
}

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os << "method=" << method_name(cfg.method) << "\n";
  os << "cba=" << (cfg.method.use_cba ? 1 : 0) << "\n";
  os << "alpha=" << fmt(cfg.method.alpha) << "\n";
  os << "beta=" << fmt(cfg.method.beta) << "\n";
  os << "derpp_replay_weight=" << fmt(cfg.method.derpp_replay_weight) << "\n";
  os << "derpp_distill_weight=" << fmt(cfg.method.derpp_distill_weight) << "\n";
  os << "mode=" << (cfg.stream.mode == StreamMode::Blurry ? "blurry" : "disjoint") << "\n";
  os << "tasks=" << cfg.stream.tasks << "\n";
  os << "blurry_k=" << cfg.stream.blurry_k << "\n";
  os << "epochs=" << cfg.stream.epochs_per_task << "\n";
  os << "batch=" << cfg.stream.batch_size << "\n";
  os << "test_fraction=" << fmt(cfg.stream.test_fraction) << "\n";
  os << "dataset=" << cfg.stream.dataset << "\n";
  os << "task_order=";
  for (std::size_t i = 0; i < cfg.stream.task_order.size(); ++i)
    os << (i ? "," : "") << cfg.stream.task_order[i];
  os << "\n";
  os << "backbone=";
  for (std::size_t i = 0; i < cfg.backbone_widths.size(); ++i)
    os << (i ? "," : "") << cfg.backbone_widths[i];
  os << "\n";
  os << "cba_hidden=" << cfg.cba_hidden << "\n";
  os << "M=" << cfg.buffer_capacity << "\n";
  os << "seeds=";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << "\n";
  os << "eval_interval=" << cfg.eval_interval << "\n";
  os << "diag=" << (cfg.diagnostics ? 1 : 0) << "\n";
  os << "synth_classes=" << cfg.stream.synth_classes << "\n";
  os << "synth_dim=" << cfg.stream.synth_dim << "\n";
  os << "synth_per_class=" << cfg.stream.synth_per_class << "\n";
  os << "synth_separation=" << fmt(cfg.stream.synth_separation) << "\n";
  os << "synth_spread=" << fmt(cfg.stream.synth_spread) << "\n";
  return os.str();
}

void emit_results(const RunResult& result, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  auto open = [&](const std::string& name) {
    std::ofstream os(fs::path(cfg.out_dir) / name);
    if (!os) throw std::runtime_error("emit_results: cannot write " +
                                      (fs::path(cfg.out_dir) / name).string());
    return os;
  };

  {
    std::ofstream os = open("config.echo");
    os << config_echo(cfg);
  }

  const std::string m = method_name(cfg.method);
  const std::string c = cfg.method.use_cba ? "1" : "0";
  {
    std::ofstream os = open("summary.csv");
    os << "method,cba,seed,ACC,FM,ACC_AUC_raw,ACC_AUC_norm\n";
    for (const SeedResult& s : result.per_seed) {
      if (s.failed) continue;
      os << m << "," << c << "," << s.seed << "," << fmt(s.acc) << "," << fmt(s.fm)
         << "," << fmt(s.auc_raw) << "," << fmt(s.auc_norm) << "\n";
    }
    os << m << "," << c << ",mean," << fmt(result.mean_acc) << "," << fmt(result.mean_fm)
       << "," << fmt(result.mean_auc_raw) << "," << fmt(result.mean_auc_norm) << "\n";
    os << m << "," << c << ",std," << fmt(result.std_acc) << "," << fmt(result.std_fm)
       << "," << fmt(result.std_auc_raw) << "," << fmt(result.std_auc_norm) << "\n";
  }

  for (const SeedResult& s : result.per_seed) {
    const std::string tag = std::to_string(s.seed);
    if (s.failed) {
      std::ofstream os = open("failed_" + tag + ".txt");
      os << s.error << "\n";
    }
    {
      std::ofstream os = open("matrix_" + tag + ".csv");
      const int T = s.matrix.tasks();
      os << "task";
      for (int j = 0; j < T; ++j) os << ",after_task_" << (j + 1);
      os << "\n";
      for (int i = 0; i < T; ++i) {
        os << "task_" << (i + 1);
        for (int j = 0; j < T; ++j) {
          os << ",";
          if (s.matrix.is_set(i, j)) os << fmt(s.matrix.a(i, j));
        }
        os << "\n";
      }
    }
    {
      std::ofstream os = open("trace_" + tag + ".csv");
      os << "step,avg_acc\n";
      for (const TracePoint& p : s.trace)
        os << p.step << "," << fmt(p.avg_acc) << "\n";
    }
    if (cfg.diagnostics && !s.diags.empty()) {
      std::ofstream os = open("diag_" + tag + ".csv");
      os << "step,inner_loss,outer_loss,align_ip,trn_grad_sq\n";
      for (const DiagRecord& d : s.diags)
        os << d.step << "," << fmt(d.inner_loss) << "," << fmt(d.outer_loss) << ","
           << fmt(d.align_ip) << "," << fmt(d.trn_grad_sq) << "\n";
    }
  }
}

}  // namespace cba
