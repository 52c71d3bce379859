// mannprune command-line front end.
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mannprune/commands.hpp"

namespace mp = mannprune;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string data;
  std::string checkpoint;
  std::string against;
  std::string resume;
  std::string gait_spec;
  std::string sparsity = "0.1..0.9";
  double threshold_cm = mp::kDefaultSkatingThresholdCm;
  std::size_t reps = 200;
  bool renormalize = false;
};

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

mp::RunConfig resolve_config(const Options& o, bool threshold_given) {
  mp::RunConfig rc = o.config.empty() ? mp::run_config_from_json(mp::json::object()) : mp::load_run_config(o.config);
  if (o.seed) rc.seed = *o.seed;
  if (threshold_given) rc.eval.threshold_cm = o.threshold_cm;
  rc.validate();
  return rc;
}

void require(const std::string& value, const char* flag, const char* cmd) {
  if (value.empty()) throw mp::ConfigError(std::string(cmd) + " requires " + flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts motion model: synthesis, training with pruning, evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto data_flag = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "dataset directory from gen-data (default: synthesize in memory)")
        ->check(CLI::ExistingDirectory);
  };
  std::vector<CLI::Option*> threshold_opts;
  auto threshold = [&](CLI::App* sub) {
    threshold_opts.push_back(sub->add_option("--threshold-cm", o.threshold_cm, "skating contact height H in cm"));
  };
  auto checkpoint = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--checkpoint", o.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
    if (required) opt->required();
  };

  auto* gen = app.add_subcommand("gen-data", "synthesize the gait dataset");
  common(gen);

  auto* tr = app.add_subcommand("train", "train (and prune) a model");
  common(tr);
  data_flag(tr);
  tr->add_option("--resume", o.resume, "continue from a checkpoint with training state")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "skating and cost reports for a checkpoint");
  common(ev);
  checkpoint(ev, true);
  threshold(ev);
  ev->add_option("--gait-spec", o.gait_spec, "evaluate on this gait spec JSON instead of the eval gaits")
      ->check(CLI::ExistingFile);

  auto* sw = app.add_subcommand("sweep", "train one model per sparsity and evaluate each");
  common(sw);
  data_flag(sw);
  threshold(sw);
  sw->add_option("--sparsity", o.sparsity, "list such as 0.1..0.9 or 0.1,0.5,0.9");

  auto* cmp = app.add_subcommand("compare", "dense vs pruned models at equal nonzero parameter counts");
  common(cmp);
  data_flag(cmp);
  threshold(cmp);

  auto* ab = app.add_subcommand("ablate", "deactivate each expert in turn");
  common(ab);
  checkpoint(ab, true);
  threshold(ab);
  ab->add_flag("--renormalize", o.renormalize, "rescale the remaining blend weights to sum to 1");

  auto* tc = app.add_subcommand("trace", "record blend coefficients during rollouts");
  common(tc);
  checkpoint(tc, true);
  tc->add_option("--against", o.against, "second checkpoint to trace and compare")->check(CLI::ExistingFile);

  auto* bn = app.add_subcommand("bench", "dense vs CSR inference timing");
  common(bn);
  checkpoint(bn, false);
  bn->add_option("--sparsity", o.sparsity, "list such as 0.1..0.9 or 0.1,0.5,0.9");
  bn->add_option("--reps", o.reps, "timing repetitions (>= 100)");

  auto* ex = app.add_subcommand("export", "dump a checkpoint as JSON and CSV");
  common(ex);
  checkpoint(ex, true);

  CLI11_PARSE(app, argc, argv);

  try {
    bool thr = false;
    for (const auto* opt : threshold_opts) thr = thr || opt->count() > 0;
    const std::filesystem::path out = o.out;
    if (gen->parsed()) {
      mp::cmd_gen_data(resolve_config(o, false), out);
    } else if (tr->parsed()) {
      const auto r = mp::cmd_train(resolve_config(o, false), opt_path(o.data), out, opt_path(o.resume));
      std::printf("trained %llu steps, final sparsity %s -> %s\n", static_cast<unsigned long long>(r.report.steps),
                  mp::format_number(r.report.final_sparsity).c_str(), (out / "checkpoint.bin").c_str());
    } else if (ev->parsed()) {
      const auto r = mp::cmd_eval(o.checkpoint, resolve_config(o, thr), out, opt_path(o.gait_spec));
      std::printf("mean skating %s cm/frame, size %s Mb, %s MFLOPs\n", mp::format_number(mp::mean_skating(r.skating)).c_str(),
                  mp::format_number(r.cost.size_megabits).c_str(), mp::format_number(r.cost.mflops_total).c_str());
    } else if (sw->parsed()) {
      const auto list = mp::parse_sparsity_list(o.sparsity);
      const auto rows = mp::cmd_sweep(resolve_config(o, thr), list, opt_path(o.data), out);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += !r.ok;
      std::printf("sweep: %zu rows, %zu failed -> %s\n", rows.size(), failed, (out / "sweep.csv").c_str());
    } else if (cmp->parsed()) {
      const auto r = mp::cmd_compare(resolve_config(o, thr), opt_path(o.data), out);
      std::printf("comparison: %zu rows, %zu ordering warnings -> %s\n", r.rows.size(), r.warnings.size(),
                  (out / "comparison.csv").c_str());
    } else if (ab->parsed()) {
      mp::cmd_ablate(o.checkpoint, resolve_config(o, thr), out, o.renormalize);
    } else if (tc->parsed()) {
      const auto r = mp::cmd_trace(o.checkpoint, resolve_config(o, false), out, opt_path(o.against));
      for (const auto& c : r.comparisons)
        std::printf("%s: entropy %s (%s) vs %s (%s), delta %s\n", c.gait.c_str(), mp::format_number(c.entropy_a).c_str(),
                    c.model_a.c_str(), mp::format_number(c.entropy_b).c_str(), c.model_b.c_str(),
                    mp::format_number(c.entropy_delta).c_str());
    } else if (bn->parsed()) {
      const auto list = mp::parse_sparsity_list(o.sparsity);
      const auto r = mp::cmd_bench(opt_path(o.checkpoint), resolve_config(o, false), list, out, o.reps);
      for (const auto& row : r.rows)
        std::printf("s=%s speedup %sx\n", mp::format_number(row.sparsity).c_str(), mp::format_number(row.speedup).c_str());
    } else if (ex->parsed()) {
      require(o.checkpoint, "--checkpoint", "export");
      mp::cmd_export(o.checkpoint, out);
    }
  } catch (const std::exception& e) {
    mp::log(mp::LogLevel::error, e.what());
    return 1;
  }
  return 0;
}
