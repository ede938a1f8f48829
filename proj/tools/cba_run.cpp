#include "cba/cli.hpp"

#include <cstdio>
#include <iostream>

int main(int argc, char** argv) {
  cba::RunConfig cfg;
  try {
    cfg = cba::parse_config(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const cba::HelpRequested& e) {
    std::cout << e.what();
    return 0;
  } catch (const cba::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  cba::RunResult result;
  try {
    result = cba::run_experiment(cfg);
    cba::emit_results(result, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  for (const cba::SeedResult& s : result.per_seed) {
    if (s.failed)
      std::printf("seed %llu: FAILED (%s)\n",
                  static_cast<unsigned long long>(s.seed), s.error.c_str());
    else
      std::printf("seed %llu: ACC=%.2f FM=%.2f ACC_AUC_norm=%.2f\n",
                  static_cast<unsigned long long>(s.seed), s.acc, s.fm, s.auc_norm);
  }
  if (result.failed_seeds < static_cast<int>(result.per_seed.size()))
    std::printf("mean: ACC=%.2f (sd %.2f) FM=%.2f (sd %.2f)\n", result.mean_acc,
                result.std_acc, result.mean_fm, result.std_fm);
  if (result.failed_seeds == static_cast<int>(result.per_seed.size())) return 3;
  return 0;
}
