#include "cba/cli.hpp"

#include <CLI11.hpp>

#include <sstream>

namespace cba {

namespace {

std::vector<std::uint64_t> parse_u64_csv(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

std::vector<int> parse_int_csv(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args) {
  RunConfig cfg;
  CLI::App app{"Online continual learning lab: rehearsal baselines with an "
               "optional bias-adaptor module"};

  std::string method = "er";
  std::string seeds_csv, order_csv, hidden_csv;
  int blurry_k = -1;

  app.add_option("--method", method, "Training method: er | derpp")
      ->check(CLI::IsMember({"er", "derpp"}));
  app.add_flag("--cba", cfg.method.use_cba, "Enable the bias-adaptor bi-level step");
  app.add_option("--M", cfg.buffer_capacity, "Memory buffer capacity")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--tasks", cfg.stream.tasks, "Number of tasks")
      ->check(CLI::PositiveNumber);
  app.add_option("--blurry-K,--K", blurry_k,
                 "Blurry stream: percent of each task's data exchanged");
  app.add_option("--epochs", cfg.stream.epochs_per_task, "Epochs per task (1 = online)")
      ->check(CLI::PositiveNumber);
  app.add_option("--batch", cfg.stream.batch_size, "Stream batch size")
      ->check(CLI::PositiveNumber);
  app.add_option("--alpha", cfg.method.alpha, "Inner (classifier) learning rate");
  app.add_option("--beta", cfg.method.beta, "Outer (adaptor) learning rate");
  app.add_option("--seeds", seeds_csv, "Comma-separated seed list");
  app.add_option("--dataset", cfg.stream.dataset, "Dataset file path or 'synthetic'");
  app.add_option("--task-order", order_csv, "Task order permutation, e.g. 0,1,2,4,3");
  app.add_option("--eval-interval", cfg.eval_interval, "Trace interval in steps")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out_dir, "Output directory");
  app.add_flag("--diag", cfg.diagnostics, "Record per-step bilevel diagnostics");
  app.add_option("--hidden", hidden_csv, "Backbone hidden widths, comma-separated");
  app.add_option("--cba-hidden", cfg.cba_hidden, "Adaptor hidden width")
      ->check(CLI::PositiveNumber);
  app.add_option("--derpp-replay-weight", cfg.method.derpp_replay_weight);
  app.add_option("--derpp-distill-weight", cfg.method.derpp_distill_weight);
  app.add_option("--test-fraction", cfg.stream.test_fraction);
  app.add_option("--workers", cfg.workers, "Parallel seed slots (0 = cores)");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  std::string prog = "cba_run";
  argv.push_back(prog.data());
  for (std::string& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::ParseError& e) {
    std::ostringstream os;
    os << e.what() << "\n\n" << app.help();
    throw ConfigError(os.str());
  }

  cfg.method.method = method == "er" ? Method::ER : Method::DERPP;
  if (blurry_k >= 0) {
    if (blurry_k >= 100)
      throw ConfigError("--blurry-K must be in [0, 100), got " +
                        std::to_string(blurry_k));
    cfg.stream.mode = StreamMode::Blurry;
    cfg.stream.blurry_k = blurry_k;
  } else if (blurry_k != -1) {
    throw ConfigError("--blurry-K must be in [0, 100), got " + std::to_string(blurry_k));
  }
  try {
    if (app.count("--seeds") > 0) cfg.seeds = parse_u64_csv(seeds_csv);
    if (!order_csv.empty()) cfg.stream.task_order = parse_int_csv(order_csv);
    if (!hidden_csv.empty()) cfg.backbone_widths = parse_int_csv(hidden_csv);
  } catch (const std::exception&) {
    throw ConfigError("malformed comma-separated list argument");
  }
  if (cfg.seeds.empty()) throw ConfigError("--seeds must list at least one seed");
  if (!(cfg.method.alpha > 0.0)) throw ConfigError("--alpha must be > 0");
  if (!(cfg.method.beta >= 0.0)) throw ConfigError("--beta must be >= 0");
  if (cfg.method.derpp_replay_weight < 0.0 || cfg.method.derpp_distill_weight < 0.0)
    throw ConfigError("DER++ weights must be >= 0");
  if (cfg.stream.test_fraction < 0.0 || cfg.stream.test_fraction >= 1.0)
    throw ConfigError("--test-fraction must be in [0, 1)");
  return cfg;
}

}  // namespace cba
