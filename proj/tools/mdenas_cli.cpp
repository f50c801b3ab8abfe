// mdenas: multinomial-distribution architecture search driver.
//
//   mdenas search      --config C --out DIR [--seed S ...] [--jobs J] [--resume CKPT] [--until EPOCH]
//   mdenas simulate    --config C --cohort M --out FILE [--seed S]
//   mdenas analyze-tau SCORES.csv --out FILE
//   mdenas derive      CHECKPOINT --k K --out FILE

#include <cstdlib>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mdenas/commands.hpp"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("mdenas");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MDENAS_LOG")) {
    const std::string level = env;
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "warn") spdlog::set_level(spdlog::level::warn);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring MDENAS_LOG='{}' (expected error|warn|info|debug)", level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  namespace cli = mdenas::cli;

  CLI::App app{"Multinomial distribution learning for cell-based architecture search"};
  app.require_subcommand(1);

  cli::SearchOptions search;
  std::string search_config, search_out, resume;
  std::size_t until = 0;
  auto* search_cmd = app.add_subcommand("search", "Run the search and write trace, genotypes, checkpoint, manifest");
  search_cmd->add_option("--config", search_config, "JSON config")->required();
  search_cmd->add_option("--out", search_out, "Output directory")->required();
  search_cmd->add_option("--seed", search.seeds, "Seed override; several seeds run as a batch");
  search_cmd->add_option("--jobs", search.jobs, "Parallel seeds in a batch")->check(CLI::PositiveNumber);
  search_cmd->add_option("--resume", resume, "Continue from checkpoint.json");
  search_cmd->add_option("--until", until, "Stop after this epoch")->check(CLI::PositiveNumber);

  cli::SimulateOptions simulate;
  std::string simulate_config, simulate_out;
  std::uint64_t simulate_seed = 0;
  auto* simulate_cmd = app.add_subcommand("simulate", "Score a random cohort at every epoch with the surrogate");
  simulate_cmd->add_option("--config", simulate_config, "JSON config with a surrogate evaluator")->required();
  simulate_cmd->add_option("--cohort", simulate.cohort, "Number of architectures")->required();
  simulate_cmd->add_option("--out", simulate_out, "Score CSV")->required();
  auto* simulate_seed_opt = simulate_cmd->add_option("--seed", simulate_seed, "Seed override");

  std::string scores, tau_out;
  auto* tau_cmd = app.add_subcommand("analyze-tau", "Kendall tau of every epoch's ranking against the final one");
  tau_cmd->add_option("scores", scores, "Score CSV (epoch,arch_id,accuracy)")->required();
  tau_cmd->add_option("--out", tau_out, "Tau CSV")->required();

  std::string checkpoint, derive_out;
  std::size_t k = 2;
  auto* derive_cmd = app.add_subcommand("derive", "Derive genotypes from a checkpoint");
  derive_cmd->add_option("checkpoint", checkpoint, "checkpoint.json")->required();
  derive_cmd->add_option("--k", k, "Inputs kept per node");
  derive_cmd->add_option("--out", derive_out, "Output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kUsage;
  }

  if (*search_cmd) {
    search.config_path = search_config;
    search.out_dir = search_out;
    if (!resume.empty()) search.resume = resume;
    if (until > 0) search.until = until;
    return cli::cmd_search(search);
  }
  if (*simulate_cmd) {
    simulate.config_path = simulate_config;
    simulate.out_csv = simulate_out;
    if (*simulate_seed_opt) simulate.seed = simulate_seed;
    return cli::cmd_simulate(simulate);
  }
  if (*tau_cmd) return cli::cmd_analyze_tau(scores, tau_out);
  return cli::cmd_derive(checkpoint, k, derive_out);
}
