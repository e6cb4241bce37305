// mlat: corpus generation, staged training, sampling and evaluation.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 missing prerequisite,
// 4 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mlat/pipeline/pipeline.hpp"

using namespace mlat;
using namespace mlat::pipeline;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load(const Globals& g) {
  RunConfig c = g.config.empty() ? from_json(json::object()) : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out_dir = g.out;
  return c;
}

void print_rows(const std::vector<metrics::MetricRow>& rows) {
  for (const auto& r : rows) {
    if (r.scope.rfind("joint", 0) == 0) continue;
    std::cout << r.metric << " [" << r.scope << "] = " << r.value << ' ' << r.units << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mlat: latent motion generation pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out, "override the output directory");

  auto* gen = app.add_subcommand("gen-corpus", "write the synthetic corpus and its manifest");

  auto* train = app.add_subcommand("train", "train one stage (vae, lra/stage0, flow/stage1)");
  std::string stage;
  std::string resume;
  std::optional<std::size_t> stop_after;
  train->add_option("--stage", stage, "stage name")->required();
  train->add_option("--resume", resume, "continue from this stage checkpoint");
  train->add_option("--stop-after", stop_after, "checkpoint and stop after this step");

  auto* sample = app.add_subcommand("sample", "class-conditional samples decoded to M269");
  std::string only_class;
  std::optional<std::size_t> count;
  std::string sample_dir;
  sample->add_option("--class", only_class, "one class (default: every class)");
  sample->add_option("--count", count, "samples per class (default: sample.per_class)");
  sample->add_option("--dir", sample_dir, "output directory (default: <out>/samples)");

  auto* recon = app.add_subcommand("reconstruct", "VAE round trip of the held-out split");
  std::string recon_dir;
  recon->add_option("--dir", recon_dir, "output directory (default: <out>/recon)");

  auto* eval = app.add_subcommand("eval", "metrics between matched motion directories");
  std::string pred_dir, gt_dir, eval_dir;
  eval->add_option("--pred", pred_dir, "predicted motions")->required();
  eval->add_option("--gt", gt_dir, "reference motions")->required();
  eval->add_option("--dir", eval_dir, "output directory (default: <out>/eval)");

  auto* probe = app.add_subcommand("probe", "shuffled-condition probe of the lra stage");

  auto* run = app.add_subcommand("run", "every stage and evaluation; writes <out>/metrics.csv");

  auto* mask = app.add_subcommand("mask-dump", "hybrid attention mask of a layout as 0/1 CSV");
  std::string layout;
  mask->add_option("--layout", layout, "spans such as T2,M3,I1")->required();

  auto* show = app.add_subcommand("show-config", "print the effective config and its hash");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (mask->parsed()) {
      write_mask_csv(std::cout, backbone::build_hybrid_mask(parse_layout(layout)));
      return 0;
    }
    const RunConfig c = load(g);
    const std::filesystem::path out = c.out_dir;
    if (show->parsed()) {
      std::cout << to_json(c).dump(2) << "\nconfig_hash: " << config_hash(c) << '\n';
    } else if (gen->parsed()) {
      write_corpus(c);
      std::cout << "corpus written to " << c.corpus_path() << '\n';
    } else if (train->parsed()) {
      StageOptions opt;
      opt.resume = resume;
      opt.stop_after = stop_after;
      opt.log = &std::cerr;
      train_stage(c, parse_stage(stage), opt);
    } else if (sample->parsed()) {
      cmd_sample(c, only_class, count.value_or(c.sample.per_class), sample_dir.empty() ? out / "samples" : std::filesystem::path(sample_dir));
    } else if (recon->parsed()) {
      cmd_reconstruct(c, recon_dir.empty() ? out / "recon" : std::filesystem::path(recon_dir));
    } else if (eval->parsed()) {
      const EvalResult r = evaluate_dirs(pred_dir, gt_dir);
      write_eval(eval_dir.empty() ? out / "eval" : std::filesystem::path(eval_dir), config_hash(c), r);
      print_rows(r.rows);
    } else if (probe->parsed()) {
      const GeneratorModel m = load_generator(c, Stage::Lra, Stage::Lra);
      const lra::ShuffleReport r = lra_probe(c, m.store);
      const std::vector<metrics::MetricRow> rows{{"lra_matched_err", "heldout", r.matched_err, "mse"},
                                                 {"lra_shuffled_err", "heldout", r.shuffled_err, "mse"},
                                                 {"lra_shuffle_ratio", "heldout", r.ratio, "ratio"}};
      write_metrics(out / "lra_probe.csv", config_hash(c), rows);
      print_rows(rows);
    } else if (run->parsed()) {
      print_rows(run_all(c, &std::cerr).rows);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
